"""Rasch mixture models fitted by conditional maximum likelihood within EM.

Mixture-based and likelihood-ratio DIF detection, plus the simulation study
machinery for detection rates.
"""

__version__ = "0.1.0"

from .cml import CmlFit, conditional_loglik, fit_cml
from .data import (
    DataError,
    FilterReport,
    ResponseMatrix,
    dichotomize,
    filter_extremes,
    load_verbal_aggression,
    read_csv,
)
from .dif import DifReport, andersen_lr_test, detect_dif_mixture
from .esf import EsfTable, esf
from .mixture import (
    MixtureFit,
    MixtureSpec,
    df_count,
    em_fit,
    mixture_loglik,
    select_k,
    select_score_model,
)
from .scoredist import ScoreModel, fit_scoredist, score_prob
from .sim import ScenarioSpec, StudyResult, generate_scenario, run_study
