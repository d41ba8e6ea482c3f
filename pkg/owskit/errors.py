"""공통 예외 정의"""

from __future__ import annotations


class OwsError(Exception):
    """owskit에서 발생하는 모든 예외의 부모 클래스."""


class ShapeError(OwsError, ValueError):
    pass


class RankError(OwsError, ValueError):
    pass


class NonFiniteError(OwsError, ValueError):
    pass


class ConfigError(OwsError, ValueError):
    pass


class StateError(OwsError, RuntimeError):
    pass


class FormatError(OwsError, ValueError):
    """체크포인트/번들 포맷 오류. 문제가 된 필드를 함께 담는다."""

    def __init__(self, message: str, field: str) -> None:
        super().__init__(f"{message} (field: {field})")
        self.field = field


class DivergenceError(OwsError, RuntimeError):
    """학습 중 loss가 NaN/Inf가 된 경우."""

    def __init__(self, step: int, loss: float) -> None:
        super().__init__(f"Loss diverged at step {step}: {loss}")
        self.step = step
        self.loss = loss


class DegenerateImportanceError(ConfigError):
    """중요도가 모두 0이라 확률로 정규화할 수 없는 경우."""
