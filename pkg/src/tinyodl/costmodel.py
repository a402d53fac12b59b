"""Closed-form memory, parameter and duty-cycle power models of the ODL core."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

WORD_BYTES = 4
KB = 1000


class Variant(str, enum.Enum):
    NOODL = "noodl"
    ODLBASE = "odlbase"
    ODLHASH = "odlhash"


@dataclass(frozen=True)
class ModelShape:
    n: int = 561
    N: int = 128
    m: int = 6

    def __post_init__(self):
        if self.n < 1 or self.N < 1 or self.m < 2:
            raise ValueError(f"invalid shape n={self.n}, N={self.N}, m={self.m}")


def memory_words(variant, shape: ModelShape) -> int:
    """32-bit words held by the core.

    Inference keeps alpha (n*N), beta (N*m) and one input buffer (n). ODL adds
    P and an N*N working copy; the hashed variant drops the stored alpha.
    """
    variant = Variant(variant)
    n, N, m = shape.n, shape.N, shape.m
    words = n * N + N * m + n
    if variant is Variant.NOODL:
        return words
    words += 2 * N * N
    if variant is Variant.ODLHASH:
        words -= n * N
    return words


def memory_bytes(variant, shape: ModelShape) -> int:
    return WORD_BYTES * memory_words(variant, shape)


def memory_kb(variant, shape: ModelShape) -> float:
    return memory_bytes(variant, shape) / KB


def parameter_count(variant, shape: ModelShape) -> int:
    """Trainable and ODL-state parameters: beta, P and its working copy, plus stored alpha."""
    variant = Variant(variant)
    count = shape.N * shape.m
    if variant is Variant.NOODL:
        return count + shape.n * shape.N
    count += 2 * shape.N * shape.N
    if variant is Variant.ODLBASE:
        count += shape.n * shape.N
    return count


def round_thousands(count: int) -> str:
    return f"{round(count / 1000)}k"


# ---------------------------------------------------------------------------
# power

# nominal 2.4 GHz radio at 0 dBm TX, 3.0 V supply, 1 Mbps
RADIO_TX_MW = 14.4
RADIO_RX_MW = 13.8
RADIO_BPS = 1_000_000


def airtime_s(n_bytes: int, bps: float = RADIO_BPS) -> float:
    return 8 * n_bytes / bps


@dataclass(frozen=True)
class PowerParams:
    """Timing (seconds), power (mW) and per-exchange radio energy (uJ)."""

    t_pred: float = 36.40e-3
    t_train: float = 171.28e-3
    p_pred: float = 3.39
    p_train: float = 3.37
    p_idle: float = 3.06
    p_sleep: float = 1.33
    e_query: float = RADIO_TX_MW * airtime_s(2252) * 1e3
    e_resp: float = RADIO_RX_MW * airtime_s(10) * 1e3
    t_air: float = airtime_s(2252) + airtime_s(10)
    event_period: float = 1.0
    fill: str = "sleep"

    def __post_init__(self):
        for name in ("t_pred", "t_train", "p_pred", "p_train", "p_idle", "p_sleep", "event_period"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.e_query < 0 or self.e_resp < 0 or self.t_air < 0:
            raise ValueError("radio energy and airtime must be non-negative")
        if self.fill not in ("sleep", "idle"):
            raise ValueError("fill must be 'sleep' or 'idle'")

    @property
    def p_fill(self) -> float:
        return self.p_sleep if self.fill == "sleep" else self.p_idle

    def with_period(self, period: float) -> "PowerParams":
        return replace(self, event_period=period)


class TimingOverflow(ValueError):
    pass


@dataclass(frozen=True)
class PowerReport:
    """Average power (mW) over one event period, split by source."""

    event_period: float
    query_fraction: float
    mode: str
    compute_mW: float
    communication_mW: float
    baseline_mW: float

    @property
    def avg_power_mW(self) -> float:
        return self.compute_mW + self.communication_mW + self.baseline_mW


def average_power(params: PowerParams, q: float, mode: str = "training") -> PowerReport:
    """Average power of one event with a fraction ``q`` of samples queried and trained.

    Energy per event: prediction, then for queried samples the radio exchange
    and a sequential update, with the rest of the period at the fill power.
    Predicting mode has no query or training terms.
    """
    if mode not in ("training", "predicting"):
        raise ValueError(f"unknown mode {mode!r}")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"query fraction {q} outside [0, 1]")
    if mode == "predicting":
        q = 0.0
    p = params
    busy = p.t_pred + p.t_train + p.t_air
    if busy > p.event_period:
        raise TimingOverflow(
            f"event needs {busy * 1e3:.2f} ms but the period is {p.event_period * 1e3:.2f} ms"
        )
    active = p.t_pred + q * (p.t_train + p.t_air)
    compute = p.p_pred * p.t_pred + q * p.p_train * p.t_train
    comm = q * (p.e_query + p.e_resp) * 1e-3
    baseline = p.p_fill * (p.event_period - active)
    T = p.event_period
    return PowerReport(T, q, mode, compute / T, comm / T, baseline / T)


def table1(shape_n=561, shape_m=6, hidden=(32, 64, 128, 256, 512)):
    """Rows ``(variant, N, kB)`` for every variant and hidden size."""
    return [
        (v.value, N, memory_kb(v, ModelShape(shape_n, N, shape_m)))
        for v in Variant
        for N in hidden
    ]
