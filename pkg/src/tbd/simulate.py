"""Rank-preserving RCT simulator and exact finite-sample ground truths.

Each patient gets one shared longitudinal noise draw and one shared survival
quantile draw used under *both* arms, so arm-to-arm contrasts are
deterministic given covariates (rank preservation). Trajectories are linear
in time; survival times are Weibull with a covariate-shifted scale.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .science import (
    ObservedDataset,
    ObservedPatient,
    PatientTruth,
    ScienceTable,
    Stratum,
    classify_stratum,
    composite_metric,
    composite_order,
    potential_composite,
)


class ScenarioError(ValueError):
    """Scenario parameters produce an invalid data-generating process."""


@dataclass(frozen=True)
class ScenarioParams:
    """Data-generating parameters for one simulated trial scenario.

    Longitudinal slopes (score units per month) and Weibull scales (months)
    are affine in the measured covariate x and, optionally, an unmeasured
    covariate u: by default the arm-0 row gives the control arm's total
    coefficients and the arm-1 row the treated arm's totals. With
    ``treated_as_increment`` the arm-1 row is added on top of the arm-0 row
    instead.

    Fields
    ------
    a0_0, a0_x, a0_u : control-arm slope intercept and covariate loadings
    a1_0, a1_x, a1_u : treated-arm slope row (total or increment)
    th0_0, th0_x, th0_u : control-arm Weibull scale row
    th1_0, th1_x, th1_u : treated-arm Weibull scale row
    sigma : residual scale of the shared longitudinal noise, > 0
    rho : Weibull shape, > 0
    """

    name: str
    a0_0: float
    a1_0: float
    a0_x: float
    a1_x: float
    a0_u: float
    a1_u: float
    th0_0: float
    th1_0: float
    th0_x: float
    th1_x: float
    th0_u: float
    th1_u: float
    sigma: float
    rho: float
    follow_up: float
    visit_times: tuple[float, ...]
    n: int
    covariate_dist: str = "standard_normal"
    treated_as_increment: bool = False

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ScenarioError("sigma must be positive")
        if self.rho <= 0:
            raise ScenarioError("rho must be positive")
        if self.n <= 0:
            raise ScenarioError("n must be positive")
        if self.follow_up <= 0:
            raise ScenarioError("follow_up must be positive")
        for v in self.visit_times:
            if not (0 < v <= self.follow_up):
                raise ScenarioError(f"visit time {v} outside (0, follow_up]")
        if self.covariate_dist != "standard_normal":
            raise ScenarioError(f"unsupported covariate_dist {self.covariate_dist!r}")

    def with_updates(self, **kwargs) -> "ScenarioParams":
        return replace(self, **kwargs)

    def slopes(self, x: float, u: float = 0.0) -> tuple[float, float]:
        """Longitudinal slope (per month) under control and treatment."""
        slope0 = self.a0_0 + self.a0_x * x + self.a0_u * u
        slope1 = self.a1_0 + self.a1_x * x + self.a1_u * u
        if self.treated_as_increment:
            slope1 += slope0
        return slope0, slope1

    def scales(self, x: float, u: float = 0.0) -> tuple[float, float]:
        """Weibull scale (months) under control and treatment."""
        scale0 = self.th0_0 + self.th0_x * x + self.th0_u * u
        scale1 = self.th1_0 + self.th1_x * x + self.th1_u * u
        if self.treated_as_increment:
            scale1 += scale0
        return scale0, scale1

    @property
    def uses_unmeasured(self) -> bool:
        return any(c != 0.0 for c in (self.a0_u, self.a1_u, self.th0_u, self.th1_u))


@dataclass(frozen=True)
class TruthRecord:
    """Exact finite-sample estimands computed from a science table.

    ``sace`` is None when the always-survivor stratum is empty; ``sim`` is
    None when the median order statistics are infinities of opposite sign,
    and +/-inf when the median itself is infinite.
    """

    time: float
    sace: float | None
    pc: float
    sim: float | None
    rmst: float
    death_frac_control: float
    death_frac_treated: float
    n_ll: int


def weibull_quantile(u, scale, shape):
    """Inverse CDF of the Weibull(scale, shape) distribution."""
    return scale * (-np.log1p(-np.asarray(u))) ** (1.0 / shape)


def child_seed(master_seed: int, *parts) -> np.random.SeedSequence:
    """Derive an independent seed stream from a master seed and a cell key.

    String parts are hashed with crc32 so the split is stable across runs
    and platforms; integer parts are used as-is.
    """
    key = [int(master_seed)]
    for part in parts:
        if isinstance(part, str):
            key.append(zlib.crc32(part.encode("utf8")))
        else:
            key.append(int(part))
    return np.random.SeedSequence(key)


def simulate_science_table(params: ScenarioParams, seed) -> ScienceTable:
    """Draw a full science table (both arms' potential outcomes) for a trial.

    Per patient: x ~ N(0, 1); one noise draw epsilon ~ N(0, sigma) shared by
    both arms' trajectories; one uniform draw mapped through the Weibull
    quantile under each arm's scale, so survival is rank-preserving across
    arms. Treatment is assigned 1:1 by permutation (n // 2 treated).
    """
    rng = np.random.default_rng(seed)
    n = params.n
    x = rng.standard_normal(n)
    u_cov = rng.standard_normal(n) if params.uses_unmeasured else np.zeros(n)
    eps = rng.normal(0.0, params.sigma, size=n)
    u_surv = rng.uniform(size=n)
    w = np.zeros(n, dtype=int)
    w[: n // 2] = 1
    w = rng.permutation(w)

    slopes = np.array([params.slopes(xi, ui) for xi, ui in zip(x, u_cov)])
    scales = np.array([params.scales(xi, ui) for xi, ui in zip(x, u_cov)])
    if np.any(scales <= 0):
        raise ScenarioError(
            f"scenario {params.name!r}: non-positive Weibull scale for some sampled covariate"
        )
    t0 = weibull_quantile(u_surv, scales[:, 0], params.rho)
    t1 = weibull_quantile(u_surv, scales[:, 1], params.rho)

    visits = params.visit_times
    patients = []
    for i in range(n):
        y0 = {v: slopes[i, 0] * v + eps[i] for v in visits if v < t0[i]}
        y1 = {v: slopes[i, 1] * v + eps[i] for v in visits if v < t1[i]}
        patients.append(
            PatientTruth(
                id=i,
                x=(float(x[i]),),
                w=int(w[i]),
                y0=y0,
                y1=y1,
                t0=float(t0[i]),
                t1=float(t1[i]),
                follow_up=params.follow_up,
            )
        )
    return ScienceTable(
        patients=tuple(patients), follow_up=params.follow_up, visit_times=visits
    )


def observe(science: ScienceTable) -> ObservedDataset:
    """Reduce a science table to the observed dataset of the assigned arms."""
    out = []
    for p in science.patients:
        td = p.death_time(p.w)
        dead = td <= p.follow_up
        t_obs = min(td, p.follow_up)
        y_obs = {v: y for v, y in p.trajectory(p.w).items() if v <= t_obs}
        out.append(
            ObservedPatient(
                id=p.id,
                x=p.x,
                w=p.w,
                t_obs=float(t_obs),
                d_obs=int(dead),
                y_obs=y_obs,
                follow_up=p.follow_up,
            )
        )
    return ObservedDataset(
        patients=tuple(out), follow_up=science.follow_up, visit_times=science.visit_times
    )


def extended_median(values) -> float | None:
    """Order-statistic median over the extended reals.

    Odd n takes the middle order statistic; even n averages the two middle
    ones. Averaging infinities of the same sign (or an infinity with a
    finite value) yields that infinity; opposite-signed infinities have no
    defined midpoint and return None.
    """
    vals = sorted(values)
    n = len(vals)
    if n == 0:
        raise ValueError("median of empty collection")
    if n % 2 == 1:
        return vals[n // 2]
    lo, hi = vals[n // 2 - 1], vals[n // 2]
    if math.isinf(lo) and math.isinf(hi) and lo != hi:
        return None
    if math.isinf(lo):
        return lo
    if math.isinf(hi):
        return hi
    return 0.5 * (lo + hi)


def true_estimands(science: ScienceTable, t: float) -> TruthRecord:
    """Exact finite-sample estimands at horizon t from the full science table."""
    if t not in science.visit_times:
        raise ValueError(f"t={t} is not a visit time of this table")
    n = len(science)
    ll_diffs = []
    pc_sum = 0.0
    metrics = []
    rmst_sum = 0.0
    deaths0 = 0
    deaths1 = 0
    for p in science.patients:
        stratum = classify_stratum(p.t0, p.t1, t)
        z1 = potential_composite(p, 1, t)
        z0 = potential_composite(p, 0, t)
        if stratum is Stratum.LL:
            ll_diffs.append(p.y1[t] - p.y0[t])
        order = composite_order(z1, z0)
        pc_sum += 1.0 if order > 0 else (0.5 if order == 0 else 0.0)
        metrics.append(composite_metric(z1, z0))
        rmst_sum += min(p.t1, t) - min(p.t0, t)
        deaths0 += p.t0 <= t
        deaths1 += p.t1 <= t
    sace = float(np.mean(ll_diffs)) if ll_diffs else None
    return TruthRecord(
        time=t,
        sace=sace,
        pc=pc_sum / n,
        sim=extended_median(metrics),
        rmst=rmst_sum / n,
        death_frac_control=deaths0 / n,
        death_frac_treated=deaths1 / n,
        n_ll=len(ll_diffs),
    )


# --- scenario library --------------------------------------------------------

_FIELD_NAMES = (
    "a0_0", "a1_0", "a0_x", "a1_x", "a0_u", "a1_u",
    "th0_0", "th1_0", "th0_x", "th1_x", "th0_u", "th1_u",
    "sigma", "rho", "follow_up", "n",
)


def _params_from_dict(name: str, doc: dict) -> ScenarioParams:
    kwargs = {k: doc[k] for k in _FIELD_NAMES}
    return ScenarioParams(
        name=name,
        visit_times=tuple(float(v) for v in doc["visit_times"]),
        covariate_dist=doc.get("covariate_dist", "standard_normal"),
        treated_as_increment=bool(doc.get("treated_as_increment", False)),
        **kwargs,
    )


def load_scenarios(path=None) -> dict[str, ScenarioParams]:
    """Load the named scenario library (the packaged file by default)."""
    if path is None:
        text = resources.files("tbd").joinpath("scenarios.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    doc = json.loads(text)
    return {name: _params_from_dict(name, d) for name, d in doc.items()}


def get_scenario(name: str) -> ScenarioParams:
    lib = load_scenarios()
    if name not in lib:
        raise KeyError(f"unknown scenario {name!r}; known: {sorted(lib)}")
    return lib[name]
