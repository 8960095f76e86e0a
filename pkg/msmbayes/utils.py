import re
from typing import Optional, Tuple

from msmbayes.errors import ConfigError
from msmbayes.schemas import Profile

_PROFILE = re.compile(r"^\s*([wWmM])\s*:\s*([0-9]+(?:\.[0-9]+)?)\s*$")


def file_stem(label: str) -> str:
    """Lowercase file-name stem of a profile label, e.g. ``W80.5`` -> ``w80_5``."""
    return "_".join(re.findall(r"[a-z0-9]+", label.lower()))


def parse_profiles(text: str) -> Tuple[Profile, ...]:
    """
    Parse ``"w:70,w:80,m:90"`` into profiles, keeping the given order.

    Raises:
        ConfigError: on an empty list or a malformed entry
    """
    profiles = []
    for item in text.split(","):
        if not item.strip():
            continue
        match = _PROFILE.match(item)
        if match is None:
            raise ConfigError(f"Bad profile '{item.strip()}'; expected sex:age such as w:70")
        sex, age = match.groups()
        profiles.append(Profile(woman_indicator=1 if sex.lower() == "w" else 0, age=float(age)))
    if not profiles:
        raise ConfigError("At least one profile is required")
    return tuple(profiles)


def parse_age_center(text: Optional[str]) -> Optional[float]:
    """``auto`` (or nothing) means the dataset mean; otherwise a number of years."""
    if text is None or text.strip().lower() == "auto":
        return None
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"--age-center must be a number of years or 'auto', got '{text}'")
