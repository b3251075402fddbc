"""Tweakable label hash over the AES core, with backend selection.

The hash is H(x, t) = AES128_t(sigma(x)) ^ sigma(x): a full key expansion of
the 128-bit tweak t followed by one block encryption of the orthomorphism
sigma(hi||lo) = (hi^lo)||hi. A fresh expansion per tweak is the whole point
(no fixed key); callers that hash two values under one tweak should use
tccr_hash_pair so the expansion is shared.

The compiled extension is preferred when built; the pure-Python twin is the
fallback. Both expose expand_key/encrypt_block with identical semantics over
128-bit integers (round-key objects are backend-opaque).
"""

from __future__ import annotations

from . import aes as _pure_backend

try:
    from . import _aescore as _backend

    BACKEND = "compiled"
except ImportError:
    _backend = _pure_backend
    BACKEND = "pure"

MASK128 = (1 << 128) - 1
_MASK64 = (1 << 64) - 1


class CallCounters:
    """Instrumentation for hash-call accounting (4 garbler / 2 evaluator
    hash calls and 2 key expansions per AND gate)."""

    __slots__ = ("hash_calls", "key_expansions")

    def __init__(self):
        self.reset()

    def reset(self):
        self.hash_calls = 0
        self.key_expansions = 0

    def snapshot(self) -> tuple[int, int]:
        return self.hash_calls, self.key_expansions


counters = CallCounters()


def sigma(x: int) -> int:
    """Linear orthomorphism on 64-bit halves: (hi, lo) -> (hi^lo, hi)."""
    hi = x >> 64
    return ((hi ^ (x & _MASK64)) << 64) | hi


def tccr_hash(x: int, tweak: int) -> int:
    """Hash one label under a tweak (one key expansion, one AES call)."""
    counters.key_expansions += 1
    counters.hash_calls += 1
    rk = _backend.expand_key(tweak)
    s = sigma(x)
    return _backend.encrypt_block(rk, s) ^ s


def tccr_hash_pair(x0: int, x1: int, tweak: int) -> tuple[int, int]:
    """Hash two labels under one tweak, sharing the key expansion."""
    counters.key_expansions += 1
    counters.hash_calls += 2
    rk = _backend.expand_key(tweak)
    s0 = sigma(x0)
    s1 = sigma(x1)
    return _backend.encrypt_block(rk, s0) ^ s0, _backend.encrypt_block(rk, s1) ^ s1


def prf_block(key: int, block: int) -> int:
    """Raw AES call for deterministic label/delta derivation (not counted)."""
    return _backend.encrypt_block(_backend.expand_key(key), block)


class Prf:
    """Counter-mode PRF under one cached key, for reproducible label streams."""

    __slots__ = ("_rk", "_enc")

    def __init__(self, key: int):
        self._rk = _backend.expand_key(key & MASK128)
        self._enc = _backend.encrypt_block

    def value(self, block: int) -> int:
        return self._enc(self._rk, block & MASK128)


def get_backend(name: str):
    """Return a backend module by name ('pure' or 'compiled'); benchmarking aid."""
    if name == "pure":
        return _pure_backend
    if name == "compiled":
        if BACKEND != "compiled":
            raise RuntimeError("compiled AES core is not built; run setup_ext.py")
        return _backend
    raise ValueError(f"unknown backend {name!r}")
