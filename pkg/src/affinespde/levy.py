"""Multi-component Levy driver: specification, cumulant, exact sampling.

Each component is an independent scalar Levy process

    X^k_t = vol_k * W^k_t + (compound Poisson jumps - compensation),

with finite jump activity.  All jump parts are compensated, so E[X^k_t] = 0.
Jump size laws: a finite atom list, or a two-sided exponential mixture
(up-move with probability p_up and rate rate_up, down-move with rate
rate_down).

Sampling is exact in distribution per step: Gaussian increments plus a
Poisson number of jump sizes per step, minus intensity * mean * dt.  Each
(path seed, component) pair owns an independent counter-based Philox stream
with key = (seed mod 2^64) * 2^64 + component, so runs are reproducible and
components never share draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    BadProbabilities,
    ConfigError,
    GridMismatch,
    InfiniteVariance,
    MomentExplosion,
    ZeroComponent,
)

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class AtomicJumps:
    """Finite discrete jump law: ((size, prob), ...)."""

    atoms: tuple[tuple[float, float], ...]

    def validate(self):
        if not self.atoms:
            raise BadProbabilities("atom list is empty")
        probs = [p for _s, p in self.atoms]
        if any(p < 0 for p in probs):
            raise BadProbabilities(f"negative atom probability in {self.atoms}")
        if abs(sum(probs) - 1.0) > _PROB_TOL:
            raise BadProbabilities(f"atom probabilities sum to {sum(probs)}, not 1")

    @property
    def mean(self) -> float:
        return sum(s * p for s, p in self.atoms)

    @property
    def second_moment(self) -> float:
        return sum(s * s * p for s, p in self.atoms)

    def exp_moment(self, z: float) -> float:
        """E[exp(z * size)]; always finite."""
        return sum(p * math.exp(z * s) for s, p in self.atoms)

    def exp_moment_prime(self, z: float) -> float:
        """E[size * exp(z * size)]."""
        return sum(p * s * math.exp(z * s) for s, p in self.atoms)

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        sizes = np.array([s for s, _p in self.atoms])
        probs = np.array([p for _s, p in self.atoms])
        probs = probs / probs.sum()
        return gen.choice(sizes, size=n, p=probs) if n else np.zeros(0)


@dataclass(frozen=True)
class TwoSidedExponentialJumps:
    """Up-jump Exp(rate_up) with probability p_up, down-jump -Exp(rate_down)
    otherwise."""

    p_up: float
    rate_up: float
    rate_down: float

    def validate(self):
        if not 0.0 <= self.p_up <= 1.0:
            raise BadProbabilities(f"p_up = {self.p_up} outside [0, 1]")
        if self.rate_up <= 0 or self.rate_down <= 0:
            raise InfiniteVariance(
                f"two-sided exponential rates must be positive, got "
                f"({self.rate_up}, {self.rate_down})")

    @property
    def mean(self) -> float:
        return self.p_up / self.rate_up - (1 - self.p_up) / self.rate_down

    @property
    def second_moment(self) -> float:
        return 2 * self.p_up / self.rate_up ** 2 + 2 * (1 - self.p_up) / self.rate_down ** 2

    def exp_moment(self, z: float) -> float:
        if not (-self.rate_down < z < self.rate_up):
            raise MomentExplosion(
                f"exp moment of two-sided exponential finite only on "
                f"({-self.rate_down}, {self.rate_up}), got z = {z}")
        up = self.p_up * self.rate_up / (self.rate_up - z)
        dn = (1 - self.p_up) * self.rate_down / (self.rate_down + z)
        return up + dn

    def exp_moment_prime(self, z: float) -> float:
        if not (-self.rate_down < z < self.rate_up):
            raise MomentExplosion(
                f"exp moment of two-sided exponential finite only on "
                f"({-self.rate_down}, {self.rate_up}), got z = {z}")
        up = self.p_up * self.rate_up / (self.rate_up - z) ** 2
        dn = (1 - self.p_up) * self.rate_down / (self.rate_down + z) ** 2
        return up - dn

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        if not n:
            return np.zeros(0)
        up = gen.random(n) < self.p_up
        mags_up = gen.exponential(1.0 / self.rate_up, n)
        mags_dn = gen.exponential(1.0 / self.rate_down, n)
        return np.where(up, mags_up, -mags_dn)


JumpLaw = AtomicJumps | TwoSidedExponentialJumps


@dataclass(frozen=True)
class LevyComponent:
    brownian_vol: float = 0.0
    jump_intensity: float = 0.0
    jump_law: JumpLaw | None = None

    @property
    def compensation_rate(self) -> float:
        """Drift subtracted per unit time so the component is a martingale."""
        if self.jump_intensity and self.jump_law is not None:
            return self.jump_intensity * self.jump_law.mean
        return 0.0

    @property
    def variance_rate(self) -> float:
        """Var[X_t] / t."""
        out = self.brownian_vol ** 2
        if self.jump_intensity and self.jump_law is not None:
            out += self.jump_intensity * self.jump_law.second_moment
        return out


@dataclass(frozen=True)
class LevySpec:
    components: tuple[LevyComponent, ...]

    @property
    def m(self) -> int:
        return len(self.components)


def make_levy_spec(components: Sequence[LevyComponent | dict]) -> LevySpec:
    """Validate and freeze a driver specification.

    Dict entries take keys brownian_vol, jump_intensity and one of
    atoms = [[size, prob], ...] or two_sided_exp = {p_up, rate_up, rate_down}.
    """
    if not components:
        raise ConfigError("driver needs at least one component")
    out = []
    for i, comp in enumerate(components):
        if isinstance(comp, dict):
            law = None
            if comp.get("atoms") is not None:
                law = AtomicJumps(tuple((float(s), float(p)) for s, p in comp["atoms"]))
            elif comp.get("two_sided_exp") is not None:
                tse = comp["two_sided_exp"]
                law = TwoSidedExponentialJumps(
                    float(tse["p_up"]), float(tse["rate_up"]), float(tse["rate_down"]))
            comp = LevyComponent(
                brownian_vol=float(comp.get("brownian_vol", 0.0)),
                jump_intensity=float(comp.get("jump_intensity", 0.0)),
                jump_law=law)
        if comp.brownian_vol < 0:
            raise ConfigError(f"component {i}: negative Brownian volatility")
        if comp.jump_intensity < 0:
            raise ConfigError(f"component {i}: negative jump intensity")
        if comp.jump_intensity > 0 and comp.jump_law is None:
            raise BadProbabilities(f"component {i}: jump intensity without a jump law")
        if comp.jump_law is not None:
            comp.jump_law.validate()
        if comp.brownian_vol == 0.0 and (
                comp.jump_intensity == 0.0 or comp.jump_law is None):
            raise ZeroComponent(f"component {i} has no Brownian and no jump part")
        out.append(comp)
    return LevySpec(tuple(out))


def cumulant(spec: LevySpec, z) -> float:
    """Levy exponent Psi(z) = sum_k [vol_k^2 z_k^2 / 2
    + intensity_k (E[e^{z_k S}] - 1 - z_k E[S])], so that
    E[exp(<z, X_t>)] = exp(t Psi(z))."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (spec.m,):
        raise GridMismatch(f"cumulant argument has shape {z.shape}, driver has m = {spec.m}")
    total = 0.0
    for zk, comp in zip(z, spec.components):
        total += 0.5 * comp.brownian_vol ** 2 * zk ** 2
        if comp.jump_intensity and comp.jump_law is not None:
            law = comp.jump_law
            total += comp.jump_intensity * (law.exp_moment(zk) - 1.0 - zk * law.mean)
    return float(total)


def cumulant_gradient(spec: LevySpec, z) -> np.ndarray:
    """Componentwise derivative dPsi/dz_k at z (Psi is a sum over components)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (spec.m,):
        raise GridMismatch(f"gradient argument has shape {z.shape}, driver has m = {spec.m}")
    out = np.zeros(spec.m)
    for k, (zk, comp) in enumerate(zip(z, spec.components)):
        g = comp.brownian_vol ** 2 * zk
        if comp.jump_intensity and comp.jump_law is not None:
            law = comp.jump_law
            g += comp.jump_intensity * (law.exp_moment_prime(zk) - law.mean)
        out[k] = g
    return out


@dataclass(frozen=True)
class IncrementMatrix:
    """One path of driver increments: values[n, k] = X^k_{t_{n+1}} - X^k_{t_n}."""

    dt: float
    values: np.ndarray = field(repr=False)
    seed: int = 0

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


def component_stream(seed: int, component: int) -> np.random.Generator:
    """The documented stream layout: Philox keyed by (seed, component)."""
    key = (int(seed) % 2 ** 64) * 2 ** 64 + int(component)
    return np.random.Generator(np.random.Philox(key=key))


def sample_increments(spec: LevySpec, dt: float, n_steps: int, seed: int) -> IncrementMatrix:
    """Exact compensated increments over n_steps steps of length dt."""
    if dt <= 0 or n_steps < 1:
        raise ConfigError(f"need dt > 0 and n_steps >= 1, got {dt}, {n_steps}")
    values = np.zeros((n_steps, spec.m))
    sqdt = math.sqrt(dt)
    for k, comp in enumerate(spec.components):
        gen = component_stream(seed, k)
        col = np.zeros(n_steps)
        if comp.brownian_vol:
            col += comp.brownian_vol * sqdt * gen.standard_normal(n_steps)
        if comp.jump_intensity and comp.jump_law is not None:
            counts = gen.poisson(comp.jump_intensity * dt, n_steps)
            total = int(counts.sum())
            if total:
                sizes = comp.jump_law.sample(gen, total)
                sums = np.zeros(n_steps)
                np.add.at(sums, np.repeat(np.arange(n_steps), counts), sizes)
                col += sums
            col -= comp.compensation_rate * dt
        values[:, k] = col
    return IncrementMatrix(dt=dt, values=values, seed=int(seed))


def sample_increment_ensemble(spec: LevySpec, dt: float, n_steps: int,
                              seeds: Sequence[int]) -> np.ndarray:
    """Stack sample_increments over seeds: shape (n_paths, n_steps, m).
    Path p reproduces sample_increments(spec, dt, n_steps, seeds[p]) exactly."""
    out = np.zeros((len(seeds), n_steps, spec.m))
    for p, seed in enumerate(seeds):
        out[p] = sample_increments(spec, dt, n_steps, seed).values
    return out


def aggregate_increments(inc: IncrementMatrix, factor: int) -> IncrementMatrix:
    """Sum consecutive fine increments into coarse ones (noise coupling for
    refinement studies; never re-sample)."""
    if factor < 1 or inc.n_steps % factor:
        raise GridMismatch(
            f"cannot aggregate {inc.n_steps} steps by factor {factor}")
    coarse = inc.values.reshape(-1, factor, inc.m).sum(axis=1)
    return IncrementMatrix(dt=inc.dt * factor, values=coarse, seed=inc.seed)


def write_increments_csv(inc: IncrementMatrix, path) -> None:
    header = "t," + ",".join(f"dX{k + 1}" for k in range(inc.m))
    t = (np.arange(inc.n_steps) + 1) * inc.dt
    data = np.column_stack([t, inc.values])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def read_increments_csv(path, seed: int = 0) -> IncrementMatrix:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    dt = t[0] if len(t) == 1 else float(t[1] - t[0])
    return IncrementMatrix(dt=dt, values=data[:, 1:], seed=seed)
