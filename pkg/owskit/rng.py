"""카운터 기반 결정적 난수 스트림.

(seed, word1, word2, ...) 키마다 독립된 Philox 스트림을 만든다.
같은 키는 호출 순서와 무관하게 항상 같은 수열을 낸다.
"""

from __future__ import annotations

import numpy as np

# Philox 카운터는 64비트 워드 4개. 0번 워드는 스트림 내부 진행용으로 비워둔다.
_COUNTER_WORDS = 4
_MASK64 = (1 << 64) - 1


def keyed_generator(seed: int, *words: int) -> np.random.Generator:
    """seed를 키로, words를 카운터 상위 워드로 쓰는 Generator를 반환한다."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative: {seed}")
    if len(words) > _COUNTER_WORDS - 1:
        raise ValueError(f"at most {_COUNTER_WORDS - 1} counter words are supported")
    counter = [0] * _COUNTER_WORDS
    for i, word in enumerate(words, start=1):
        counter[i] = int(word) & _MASK64
    bit_generator = np.random.Philox(key=int(seed), counter=np.array(counter, dtype=np.uint64))
    return np.random.Generator(bit_generator)
