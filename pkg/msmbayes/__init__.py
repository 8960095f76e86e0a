"""
Bayesian competing-risks and illness-death models for hip-fracture refracture
data: Weibull PH hazards, exact right-censored likelihoods, adaptive MCMC,
quadrature-based outcome probabilities and a CSV-in, CSV-out command line.
"""
from msmbayes.settings import ARTIFACT_VERSION

__version__ = ARTIFACT_VERSION
