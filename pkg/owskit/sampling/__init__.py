"""레이어 샘플링: 확률 생성, 중요도 지표, 활성 집합 추출"""

from owskit.sampling.draw import ActiveSet, draw_active_set
from owskit.sampling.importance import bi_scores, block_influence, relative_magnitude, rm_scores
from owskit.sampling.probabilities import (
    METHOD_REGISTRY,
    PlanInputs,
    build_plan,
    lisa_d_probabilities,
    lisa_probabilities,
    load_plan,
    normalize_to_budget,
    ows_probabilities,
    register_method,
    reverse_ows_probabilities,
    save_plan,
    scores_probabilities,
)

__all__ = [
    "ActiveSet",
    "METHOD_REGISTRY",
    "PlanInputs",
    "bi_scores",
    "block_influence",
    "build_plan",
    "draw_active_set",
    "lisa_d_probabilities",
    "lisa_probabilities",
    "load_plan",
    "normalize_to_budget",
    "ows_probabilities",
    "register_method",
    "relative_magnitude",
    "reverse_ows_probabilities",
    "rm_scores",
    "save_plan",
    "scores_probabilities",
]
