"""Domain types and air-to-ground channel / power model.

Index conventions used throughout the package: users ``i``, ABSs ``j`` and
subcarriers ``l`` are 0-based array indices; the modulation index ``m`` is
1-based, ``m`` meaning 2^(m+1)-PSK (m=1 is QPSK, m=2 is 8PSK).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np
from scipy.special import erfc, erfcinv

SPEED_OF_LIGHT = 3.0e8

LOS = "los"
GENERALIZED = "generalized"
SCHEMES = (LOS, GENERALIZED)

GLOBAL = "global"
PER_ABS = "per-abs"
SUBCARRIER_MODES = (GLOBAL, PER_ABS)


class ModelError(ValueError):
    """Raised for inputs outside the domain of the channel model."""


def dbm_per_hz_to_watts(value_dbm: float) -> float:
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    """Environment and radio constants. ``N0`` is stored in W/Hz."""

    alpha: float = 9.61
    beta: float = 0.16
    n: float = 2.0
    f_c: float = 2.1e9
    c: float = SPEED_OF_LIGHT
    xi_los: float = 1.6
    xi_nlos: float = 23.0
    N0: float = 1e-20
    delta: float = 1e-8
    epsilon: float = 0.99

    def __post_init__(self):
        if not self.alpha > 0 or not self.beta > 0:
            raise ModelError("alpha and beta must be positive")
        if not 0.0 < self.epsilon < 1.0:
            raise ModelError("epsilon must lie in (0, 1)")
        if self.xi_nlos < self.xi_los:
            raise ModelError("xi_nlos must be >= xi_los")
        if not 0.0 < self.delta < 0.5:
            raise ModelError("delta must lie in (0, 0.5)")
        if not self.f_c > 0 or not self.N0 > 0 or not self.c > 0 or not self.n > 0:
            raise ModelError("f_c, c, n and N0 must be positive")

    @classmethod
    def urban(cls, **overrides) -> "ChannelParams":
        """Urban preset at 2.1 GHz; pass ``N0_dbm`` to override the noise density in dBm/Hz."""
        n0_dbm = overrides.pop("N0_dbm", -170.0)
        params = dict(N0=dbm_per_hz_to_watts(n0_dbm))
        params.update(overrides)
        return cls(**params)

    @property
    def eta(self) -> float:
        return (self.xi_los - self.xi_nlos) / 10.0

    @property
    def los_angle(self) -> float:
        """Minimum elevation angle (degrees) giving LoS probability ``epsilon``."""
        return inverse_los_probability(self.epsilon, self)

    @property
    def los_sine(self) -> float:
        return math.sin(math.radians(self.los_angle))

    @property
    def kappa(self) -> float:
        return 1.0 - 1.0 / self.los_sine ** 2

    def max_modulation(self) -> int:
        """Largest M such that delta*(m+1)/2 < 0.5 for every m <= M."""
        return int(math.ceil(1.0 / self.delta)) - 2


@dataclass(frozen=True)
class Scenario:
    """A static network snapshot.

    ``users`` holds (I, 2) ground coordinates in meters, strictly positive.
    ``area`` is (x_lo, x_hi, y_lo, y_hi), the bounds ABSs may be placed in.
    The modulation set is {1, ..., M}.
    """

    users: np.ndarray
    J: int
    M: int
    L: int
    tau: np.ndarray
    symbol_rate: float = 250e3
    h_min: float = 100.0
    h_max: float = 2000.0
    area: tuple = (1.0, 1001.0, 1.0, 1001.0)
    subcarrier_mode: str = GLOBAL
    channel: ChannelParams = field(default_factory=ChannelParams.urban)

    def __post_init__(self):
        users = np.array(self.users, dtype=float).reshape(-1, 2)
        tau = np.broadcast_to(np.asarray(self.tau, dtype=float), (len(users),)).copy()
        users.setflags(write=False)
        tau.setflags(write=False)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "area", tuple(float(a) for a in self.area))
        if len(users) < 1 or self.J < 1 or self.M < 1 or self.L < 1:
            raise ModelError("I, J, M and L must all be >= 1")
        if np.any(users <= 0):
            raise ModelError("user coordinates must be strictly positive")
        if not 0 < self.h_min < self.h_max:
            raise ModelError("need 0 < h_min < h_max")
        if np.any(tau <= 0):
            raise ModelError("rate thresholds must be positive")
        if self.symbol_rate <= 0:
            raise ModelError("symbol rate must be positive")
        if self.subcarrier_mode not in SUBCARRIER_MODES:
            raise ModelError(f"unknown subcarrier mode {self.subcarrier_mode!r}")
        if self.M > self.channel.max_modulation():
            raise ModelError("delta*(M+1)/2 must stay below 0.5")
        x_lo, x_hi, y_lo, y_hi = self.area
        if not (0 < x_lo < x_hi and 0 < y_lo < y_hi):
            raise ModelError("area bounds must be positive and ordered")

    @property
    def I(self) -> int:  # noqa: E743
        return len(self.users)

    def bit_rates(self) -> np.ndarray:
        """Bit rate r_m = symbol_rate * (m + 1) for m = 1..M."""
        return self.symbol_rate * (np.arange(1, self.M + 1) + 1.0)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


@dataclass(frozen=True)
class Placement:
    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def J(self) -> int:
        return len(self.positions)

    @property
    def altitudes(self) -> np.ndarray:
        return self.positions[:, 2]

    def check(self, scenario: Scenario, tol: float = 1e-9) -> None:
        x_lo, x_hi, y_lo, y_hi = scenario.area
        p = self.positions
        if len(p) != scenario.J:
            raise ModelError("placement has the wrong number of ABSs")
        if np.any(p[:, 2] < scenario.h_min - tol) or np.any(p[:, 2] > scenario.h_max + tol):
            raise ModelError("altitude outside [h_min, h_max]")
        if (np.any(p[:, 0] < x_lo - tol) or np.any(p[:, 0] > x_hi + tol)
                or np.any(p[:, 1] < y_lo - tol) or np.any(p[:, 1] > y_hi + tol)):
            raise ModelError("horizontal position outside the area")


@dataclass(frozen=True)
class Assignment:
    """Active (i, m, j, l) tuples of the binary association tensor."""

    entries: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "entries", frozenset(tuple(int(v) for v in e) for e in self.entries))

    def __iter__(self) -> Iterator[tuple]:
        return iter(sorted(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def users_of(self, j: int) -> list:
        return sorted({i for (i, _, jj, _) in self.entries if jj == j})

    def abs_of(self) -> dict:
        """Map user -> serving ABS (first one found if the tensor is malformed)."""
        out = {}
        for i, _, j, _ in sorted(self.entries):
            out.setdefault(i, j)
        return out

    def omega(self) -> list:
        """Sorted (i, j) pairs with at least one active tuple."""
        return sorted({(i, j) for (i, _, j, _) in self.entries})

    def tensor(self, I: int, M: int, J: int, L: int) -> np.ndarray:
        rho = np.zeros((I, M, J, L), dtype=np.int8)
        for i, m, j, l in self.entries:
            rho[i, m - 1, j, l] = 1
        return rho

    def counts(self, I: int, M: int, J: int) -> np.ndarray:
        """Number of active subcarriers per (i, m, j)."""
        n = np.zeros((I, M, J))
        for i, m, j, _ in self.entries:
            n[i, m - 1, j] += 1
        return n

    def structural_violations(self, scenario: Scenario) -> list:
        """Violated structural constraint classes (rate, single ABS, one modulation, subcarriers)."""
        out = []
        I, M, J, L = scenario.I, scenario.M, scenario.J, scenario.L
        for (i, m, j, l) in self.entries:
            if not (0 <= i < I and 1 <= m <= M and 0 <= j < J and 0 <= l < L):
                return ["index out of range"]
        rates = scenario.bit_rates()
        got = np.zeros(I)
        per_user_abs: dict = {}
        per_ijl: dict = {}
        per_slot: dict = {}
        for i, m, j, l in self.entries:
            got[i] += rates[m - 1]
            per_user_abs.setdefault(i, set()).add(j)
            per_ijl[(i, j, l)] = per_ijl.get((i, j, l), 0) + 1
            slot = l if scenario.subcarrier_mode == GLOBAL else (j, l)
            per_slot[slot] = per_slot.get(slot, 0) + 1
        if np.any(got < scenario.tau * (1 - 1e-12)):
            out.append("rate")
        if any(len(s) > 1 for s in per_user_abs.values()):
            out.append("single-abs")
        if any(v > 1 for v in per_ijl.values()):
            out.append("one-modulation")
        if scenario.subcarrier_mode == GLOBAL:
            if any(per_slot.get(l, 0) != 1 for l in range(L)):
                out.append("subcarrier")
        elif any(v > 1 for v in per_slot.values()):
            out.append("subcarrier")
        return out


@dataclass(frozen=True)
class ModulationTable:
    """Per-modulation power constants in W*s/(bit*m^n); entry m-1 belongs to modulation m."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        for name in ("A", "B"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            if not (np.all(np.isfinite(arr)) and np.all(arr > 0)):
                raise ModelError(f"{name} must be positive and finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def M(self) -> int:
        return len(self.A)


# ----------------------------------------------------------------------------
# Geometry and channel
# ----------------------------------------------------------------------------

def _split(user, abs_pos):
    user = np.asarray(user, dtype=float)
    abs_pos = np.asarray(abs_pos, dtype=float)
    dx = abs_pos[..., 0] - user[..., 0]
    dy = abs_pos[..., 1] - user[..., 1]
    return dx, dy, abs_pos[..., 2]


def distance(user, abs_pos):
    """3D link distance between ground user(s) (x, y) and ABS position(s) (x, y, h)."""
    dx, dy, h = _split(user, abs_pos)
    return np.sqrt(dx * dx + dy * dy + h * h)


def horizontal_distance(user, abs_pos):
    dx, dy, _ = _split(user, abs_pos)
    return np.hypot(dx, dy)


def elevation_angle(user, abs_pos):
    """Elevation angle in degrees, in (0, 90]."""
    dx, dy, h = _split(user, abs_pos)
    rho = np.hypot(dx, dy)
    if np.any((rho == 0) & (h == 0)):
        raise ModelError("elevation angle undefined at zero distance")
    # atan2 is the well-conditioned form of asin(h / d)
    return np.degrees(np.arctan2(h, rho))


def los_probability(theta, ch: ChannelParams):
    """Logistic LoS probability for elevation angle ``theta`` in degrees."""
    theta = np.asarray(theta, dtype=float)
    return 1.0 / (1.0 + ch.alpha * np.exp(-ch.beta * (theta - ch.alpha)))


def inverse_los_probability(eps: float, ch: ChannelParams) -> float:
    if not 0.0 < eps < 1.0:
        raise ModelError("probability must lie in (0, 1)")
    return ch.alpha + math.log(ch.alpha * eps / (1.0 - eps)) / ch.beta


def pathloss(d, ch: ChannelParams, link: str = LOS):
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ModelError("distance must be positive")
    if link == LOS:
        xi = ch.xi_los
    elif link == "nlos":
        xi = ch.xi_nlos
    else:
        raise ModelError(f"unknown link type {link!r}")
    return 10.0 * ch.n * np.log10(4.0 * np.pi * ch.f_c * d / ch.c) + xi


def average_pathloss(user, abs_pos, ch: ChannelParams):
    d = distance(user, abs_pos)
    p = los_probability(elevation_angle(user, abs_pos), ch)
    return 10.0 * ch.n * np.log10(4.0 * np.pi * ch.f_c * d / ch.c) + p * (ch.xi_los - ch.xi_nlos) + ch.xi_nlos


def q_function(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def q_inverse(p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ModelError("Q^-1 needs p in (0, 1)")
    return np.sqrt(2.0) * erfcinv(2.0 * p)


def ber_mpsk(p_receive, m: int, symbol_rate: float, ch: ChannelParams):
    """Bit error rate of 2^(m+1)-PSK at received power ``p_receive`` (W)."""
    p_receive = np.asarray(p_receive, dtype=float)
    arg = np.sqrt(2.0 * p_receive / (symbol_rate * ch.N0)) * np.sin(np.pi / 2 ** (m + 1))
    return 2.0 / (m + 1) * q_function(arg)


def modulation_constants(ch: ChannelParams, M: int) -> ModulationTable:
    m = np.arange(1, M + 1, dtype=float)
    target = ch.delta * (m + 1) / 2.0
    if np.any(target >= 0.5):
        raise ModelError("delta*(m+1)/2 must stay below 0.5")
    core = (q_inverse(target) / np.sin(np.pi / 2.0 ** (m + 1))) ** 2 / (m + 1)
    common = core * ch.N0 / 2.0 * (4.0 * np.pi * ch.f_c / ch.c) ** ch.n
    return ModulationTable(A=common * 10.0 ** (ch.xi_los / 10.0), B=common * 10.0 ** (ch.xi_nlos / 10.0))


def nlos_penalty(user, abs_pos, ch: ChannelParams):
    """Factor 10^(eta * Pr_LoS) multiplying B_m r d^n in the generalized scheme."""
    return 10.0 ** (ch.eta * los_probability(elevation_angle(user, abs_pos), ch))


def transmit_power(user, m: int, abs_pos, ch: ChannelParams, table: ModulationTable,
                   symbol_rate: float, scheme: str = LOS):
    """Minimum device transmit power (W) meeting the BER target on one subcarrier."""
    r = symbol_rate * (m + 1)
    d = distance(user, abs_pos)
    if scheme == LOS:
        return table.A[m - 1] * r * d ** ch.n
    if scheme == GENERALIZED:
        return table.B[m - 1] * r * d ** ch.n * nlos_penalty(user, abs_pos, ch)
    raise ModelError(f"unknown scheme {scheme!r}")


def power_tensor(scenario: Scenario, placement: Placement, table: ModulationTable, scheme: str) -> np.ndarray:
    """(I, M, J) per-subcarrier transmit power for every user/modulation/ABS triple."""
    u = scenario.users[:, None, :]
    p = placement.positions[None, :, :]
    ch = scenario.channel
    g = distance(u, p) ** ch.n
    if scheme == LOS:
        unit = table.A[: scenario.M] * scenario.bit_rates()
    elif scheme == GENERALIZED:
        unit = table.B[: scenario.M] * scenario.bit_rates()
        g = g * nlos_penalty(u, p, ch)
    else:
        raise ModelError(f"unknown scheme {scheme!r}")
    return unit[None, :, None] * g[:, None, :]


def total_power(scenario: Scenario, placement: Placement, assignment: Assignment,
                scheme: str, table: ModulationTable | None = None) -> float:
    if table is None:
        table = modulation_constants(scenario.channel, scenario.M)
    if len(assignment) == 0:
        return 0.0
    P = power_tensor(scenario, placement, table, scheme)
    return math.fsum(float(P[i, m - 1, j]) for (i, m, j, _) in assignment)


def los_threshold_distance(h, ch: ChannelParams):
    return np.asarray(h, dtype=float) / ch.los_sine


def los_feasible(user, abs_pos, ch: ChannelParams):
    """True where the link meets the LoS-probability threshold (d <= h / sin(theta*))."""
    d = distance(user, abs_pos)
    h = np.asarray(abs_pos, dtype=float)[..., 2]
    return d <= los_threshold_distance(h, ch)


def los_violations(scenario: Scenario, placement: Placement, assignment: Assignment) -> list:
    """(i, j) pairs of the assignment whose link fails the LoS condition."""
    bad = []
    for i, j in assignment.omega():
        if not bool(los_feasible(scenario.users[i], placement.positions[j], scenario.channel)):
            bad.append((i, j))
    return bad
