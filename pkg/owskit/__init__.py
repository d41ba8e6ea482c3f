"""owskit - 데스크 규모 레이어 샘플링 + 저랭크 그래디언트 파인튜닝 툴킷"""

__version__ = "0.1.0"
