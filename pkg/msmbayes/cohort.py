# msmbayes/cohort.py
"""
Validated, immutable event-history datasets.

Records are held column-wise in numpy arrays so the likelihood, the sampler
and the simulator can work on tens of thousands (or millions) of subjects
without materialising one object per subject. ``records`` rebuilds
``SubjectRecord`` models on demand.
"""
import math
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from msmbayes.errors import DatasetValidationError, ValidationFailure
from msmbayes.logger import get_logger
from msmbayes.schemas import (
    CovariateVector,
    FirstOutcome,
    PostRefracture,
    RecordViolation,
    SecondOutcome,
    SubjectRecord,
)

logger = get_logger(__name__)

FIRST_CODES: Dict[FirstOutcome, int] = {
    FirstOutcome.CENSORED: 0,
    FirstOutcome.REFRACTURE: 1,
    FirstOutcome.DEATH: 2,
}
SECOND_CODES: Dict[SecondOutcome, int] = {SecondOutcome.CENSORED: 0, SecondOutcome.DEATH: 1}
NO_SECOND = -1

_FIRST_BY_CODE = {code: outcome for outcome, code in FIRST_CODES.items()}
_SECOND_BY_CODE = {code: outcome for outcome, code in SECOND_CODES.items()}

RecordInput = Union[SubjectRecord, Mapping[str, Any]]


class CohortDataset:
    """
    Subject records plus the age-centering constant.

    Column arrays (all of length n):
        ids, woman (0/1), age (years at discharge), t_first (years),
        first_code (0 censored, 1 refracture, 2 death),
        t_second (years on the reset clock, NaN unless refractured),
        second_code (-1 absent, 0 censored, 1 death)
    """

    __slots__ = ("ids", "woman", "age", "t_first", "first_code", "t_second", "second_code",
                 "age_center", "_records")

    def __init__(
        self,
        ids: np.ndarray,
        woman: np.ndarray,
        age: np.ndarray,
        t_first: np.ndarray,
        first_code: np.ndarray,
        t_second: np.ndarray,
        second_code: np.ndarray,
        age_center: float,
    ):
        self.ids = ids
        self.woman = woman
        self.age = age
        self.t_first = t_first
        self.first_code = first_code
        self.t_second = t_second
        self.second_code = second_code
        self.age_center = float(age_center)
        self._records: Optional[Tuple[SubjectRecord, ...]] = None
        for column in (ids, woman, age, t_first, first_code, t_second, second_code):
            column.setflags(write=False)

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    @classmethod
    def from_arrays(
        cls,
        ids: Sequence[str],
        woman: Sequence[int],
        age: Sequence[float],
        t_first: Sequence[float],
        first_code: Sequence[int],
        t_second: Sequence[float],
        second_code: Sequence[int],
        age_center: float,
    ) -> "CohortDataset":
        """
        Build a dataset from columns, checking every record rule at once.

        Raises:
            DatasetValidationError: listing each offending record and rule
        """
        ids = np.asarray(ids, dtype=object)
        woman = np.asarray(woman, dtype=np.int64)
        age = np.asarray(age, dtype=float)
        t_first = np.asarray(t_first, dtype=float)
        first_code = np.asarray(first_code, dtype=np.int64)
        t_second = np.asarray(t_second, dtype=float)
        second_code = np.asarray(second_code, dtype=np.int64)

        n = len(ids)
        if any(len(col) != n for col in (woman, age, t_first, first_code, t_second, second_code)):
            raise ValidationFailure("Dataset columns have different lengths")
        if not math.isfinite(age_center):
            raise ValidationFailure("age_center must be finite")

        refractured = first_code == FIRST_CODES[FirstOutcome.REFRACTURE]
        has_second = ~np.isnan(t_second)
        rules = [
            ("woman_indicator", (woman != 0) & (woman != 1), "must be 0 or 1"),
            ("age_at_discharge", ~(np.isfinite(age) & (age >= 0)), "must be a finite age >= 0"),
            ("t_first", ~(np.isfinite(t_first) & (t_first > 0)), "must be a finite time > 0"),
            ("first_outcome", ~np.isin(first_code, list(FIRST_CODES.values())), "unknown outcome code"),
            ("post_refracture", refractured & ~has_second,
             "post_refracture is required when first_outcome is refracture"),
            ("post_refracture", ~refractured & (has_second | (second_code != NO_SECOND)),
             "post_refracture must be absent unless first_outcome is refracture"),
            ("t_second", has_second & ~(np.isfinite(t_second) & (t_second > 0)),
             "must be a finite time > 0"),
            ("second_outcome", refractured & ~np.isin(second_code, list(SECOND_CODES.values())),
             "must be censored or death after a refracture"),
        ]
        violations: List[RecordViolation] = []
        for field, mask, message in rules:
            for index in np.flatnonzero(mask):
                violations.append(RecordViolation(
                    index=int(index), record_id=str(ids[index]), field=field, message=message,
                ))
        if violations:
            violations.sort(key=lambda v: v.index)
            raise DatasetValidationError(violations)

        return cls(ids, woman, age, t_first, first_code, t_second, second_code, age_center)

    @classmethod
    def from_records(cls, records: Sequence[SubjectRecord], age_center: float) -> "CohortDataset":
        refr = [r.post_refracture for r in records]
        return cls.from_arrays(
            ids=[r.id for r in records],
            woman=[r.woman_indicator for r in records],
            age=[r.age_at_discharge for r in records],
            t_first=[r.t_first for r in records],
            first_code=[FIRST_CODES[r.first_outcome] for r in records],
            t_second=[p.t_second if p is not None else np.nan for p in refr],
            second_code=[SECOND_CODES[p.second_outcome] if p is not None else NO_SECOND for p in refr],
            age_center=age_center,
        )

    def with_age_center(self, age_center: float) -> "CohortDataset":
        if not math.isfinite(age_center):
            raise ValidationFailure("age_center must be finite")
        return CohortDataset(self.ids, self.woman, self.age, self.t_first, self.first_code,
                             self.t_second, self.second_code, age_center)

    # ------------------------------------------------------------------
    # views
    # ------------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.ids)

    def __repr__(self) -> str:
        return f"CohortDataset(n={len(self)}, age_center={self.age_center:g})"

    @property
    def age_centered(self) -> np.ndarray:
        return self.age - self.age_center

    @property
    def refractured(self) -> np.ndarray:
        return self.first_code == FIRST_CODES[FirstOutcome.REFRACTURE]

    @property
    def records(self) -> Tuple[SubjectRecord, ...]:
        if self._records is None:
            self._records = tuple(self._record(i) for i in range(len(self)))
        return self._records

    def _record(self, i: int) -> SubjectRecord:
        post = None
        if self.second_code[i] != NO_SECOND:
            post = PostRefracture(
                t_second=float(self.t_second[i]),
                second_outcome=_SECOND_BY_CODE[int(self.second_code[i])],
            )
        return SubjectRecord(
            id=str(self.ids[i]),
            woman_indicator=int(self.woman[i]),
            age_at_discharge=float(self.age[i]),
            t_first=float(self.t_first[i]),
            first_outcome=_FIRST_BY_CODE[int(self.first_code[i])],
            post_refracture=post,
        )

    def covariates(self, i: int) -> CovariateVector:
        return CovariateVector(woman_indicator=int(self.woman[i]),
                               age_centered=float(self.age[i] - self.age_center))

    def take(self, indices: Sequence[int]) -> "CohortDataset":
        """Subset or reorder subjects, keeping the centering constant."""
        idx = np.asarray(indices, dtype=int)
        return CohortDataset(self.ids[idx], self.woman[idx], self.age[idx], self.t_first[idx],
                             self.first_code[idx], self.t_second[idx], self.second_code[idx],
                             self.age_center)

    def counts(self) -> Dict[str, int]:
        return {
            "subjects": len(self),
            "women": int(np.sum(self.woman)),
            "refractures": int(np.sum(self.refractured)),
            "deaths_first": int(np.sum(self.first_code == FIRST_CODES[FirstOutcome.DEATH])),
            "deaths_after_refracture": int(np.sum(self.second_code == SECOND_CODES[SecondOutcome.DEATH])),
        }

    def equals(self, other: "CohortDataset") -> bool:
        """Exact equality of every column and of the centering constant."""
        return (
            isinstance(other, CohortDataset)
            and self.age_center == other.age_center
            and len(self) == len(other)
            and bool(np.all(self.ids == other.ids))
            and np.array_equal(self.woman, other.woman)
            and np.array_equal(self.age, other.age)
            and np.array_equal(self.t_first, other.t_first)
            and np.array_equal(self.first_code, other.first_code)
            and np.array_equal(self.t_second, other.t_second, equal_nan=True)
            and np.array_equal(self.second_code, other.second_code)
        )


# ============================================================================
# OPERATIONS
# ============================================================================

def _collect_records(records: Iterable[RecordInput]) -> List[SubjectRecord]:
    valid: List[SubjectRecord] = []
    violations: List[RecordViolation] = []
    for index, raw in enumerate(records):
        if isinstance(raw, SubjectRecord):
            valid.append(raw)
            continue
        try:
            valid.append(SubjectRecord.model_validate(dict(raw)))
        except ValidationError as exc:
            record_id = raw.get("id") if isinstance(raw, Mapping) else None
            for err in exc.errors():
                violations.append(RecordViolation(
                    index=index,
                    record_id=None if record_id is None else str(record_id),
                    field=".".join(str(p) for p in err["loc"]) or "record",
                    message=err["msg"],
                ))
    if violations:
        raise DatasetValidationError(violations)
    return valid


def validate_dataset(records: Iterable[RecordInput], age_center: float) -> CohortDataset:
    """
    Validate records (models or plain mappings) into a dataset.

    Raises:
        DatasetValidationError: with one RecordViolation per broken rule
    """
    valid = _collect_records(records)
    dataset = CohortDataset.from_records(valid, age_center)
    logger.debug("dataset_validated", **dataset.counts())
    return dataset


def center_ages(
    records: Union[CohortDataset, Iterable[RecordInput]],
    center: Optional[float] = None,
) -> CohortDataset:
    """
    Fix the age-centering constant, by default the mean age at discharge.

    Raises:
        ValidationFailure: when the center is omitted and there are no records
    """
    if isinstance(records, CohortDataset):
        dataset = records
    else:
        dataset = CohortDataset.from_records(_collect_records(records), 0.0)

    if center is None:
        if len(dataset) == 0:
            raise ValidationFailure("Cannot center ages of an empty dataset without an explicit center")
        center = math.fsum(dataset.age.tolist()) / len(dataset)

    return dataset.with_age_center(center)
