"""Monte Carlo studies of test size and power.

A :class:`SimDesign` describes one experiment: an intercept plus ``p - 1``
covariates drawn once from U(0, 1), an error law, the scale ``phi`` and the
tested block.  :func:`size_study` simulates responses under the null and
tabulates how often each statistic exceeds its chi-squared critical value
(or, for the bootstrap tests, how often the bootstrap p-value is at most
``alpha``).  :func:`power_study` first estimates size-corrected critical
values from a large null run and then reports rejection rates along a grid
of alternatives ``beta_1 = ... = beta_q = delta``.

Replicate ``i`` draws its errors from a stream keyed by ``(noise_seed, i)``
and work is cut into fixed-size chunks, so results are bitwise identical for
any number of worker processes.
"""

from __future__ import annotations

import configparser
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from ._parallel import run_chunks
from .design import DesignPartition
from .distcore import UnsupportedCorrection, correction_constants, kernel
from .estimate import fit_batch
from .resample import replicate_statistics, stream
from .testsuite import RAW, apply_corrections, correction_coefficients, statistics_batch

__all__ = [
    "ConfigError",
    "SimulationError",
    "SimDesign",
    "SimResult",
    "PowerResult",
    "size_study",
    "power_study",
    "table_report",
    "load_design",
    "bundled_designs",
    "COLUMNS",
]

ANALYTIC = ("s_w", "s_lr", "s_r", "s_t", "s_lr_star", "s_r_star", "s_t_star")
BOOT = ("boot_w", "boot_lr", "boot_r", "boot_t")
COLUMNS = ANALYTIC + BOOT
LABELS = dict(zip(COLUMNS, ("S_W", "S_LR", "S_R", "S_T", "S*_LR", "S*_R", "S*_T",
                            "S^b_W", "S^b_LR", "S^b_R", "S^b_T")))

CHUNK = 500
MAX_FAILURE_RATE = 0.01
_SIZE_DOMAIN, _CAL_DOMAIN, _POWER_DOMAIN, _BOOT_DOMAIN, _SELF_DOMAIN = 1, 2, 3, 4, 5


class ConfigError(ValueError):
    """Invalid simulation design; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid design:\n  " + "\n  ".join(self.errors))


class SimulationError(RuntimeError):
    """Too many replicate fits failed."""


@dataclass(frozen=True)
class SimDesign:
    """Description of a Monte Carlo experiment.

    ``test`` holds the design-column indices of the tested coefficients
    (default: the first ``q`` slopes, column 0 being the intercept).
    ``beta_true`` defaults to ones with the tested block at ``beta10``.
    """

    family: str
    n: int
    p: int
    q: int
    phi: float = 3.0
    beta_true: tuple[float, ...] | None = None
    beta10: tuple[float, ...] | None = None
    alphas: tuple[float, ...] = (0.10, 0.05, 0.01)
    replicates: int = 15000
    bootstrap_B: int | None = None
    covariate_seed: int = 2024
    noise_seed: int = 1
    delta_grid: tuple[float, ...] | None = None
    calibration_replicates: int = 100_000
    test: tuple[int, ...] | None = None
    name: str = ""

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise ConfigError(errors)
        set_ = partial(object.__setattr__, self)
        set_("family", kernel(self.family).spec)
        if self.test is None:
            set_("test", tuple(range(1, self.q + 1)) if self.q < self.p else tuple(range(self.q)))
        if self.beta10 is None:
            set_("beta10", (0.0,) * self.q)
        if self.beta_true is None:
            b = [1.0] * self.p
            for j, v in zip(self.test, self.beta10):
                b[j] = v
            set_("beta_true", tuple(b))
        for name in ("beta_true", "beta10", "alphas", "test", "delta_grid"):
            val = getattr(self, name)
            if val is not None:
                set_(name, tuple(val))

    def problems(self) -> list[str]:
        errs = []
        try:
            kernel(self.family)
        except ValueError as exc:
            errs.append(f"family: {exc}")
        ints = {"n": self.n, "p": self.p, "q": self.q, "replicates": self.replicates}
        for k, v in ints.items():
            if not isinstance(v, (int, np.integer)) or v < 1:
                errs.append(f"{k}: must be a positive integer, got {v!r}")
        if not errs:
            if self.q > self.p:
                errs.append(f"q: must not exceed p={self.p}, got {self.q}")
            if self.n <= self.p:
                errs.append(f"n: must exceed p={self.p}, got {self.n}")
        if not (isinstance(self.phi, (int, float)) and self.phi > 0):
            errs.append(f"phi: must be positive, got {self.phi!r}")
        for a in self.alphas or ():
            if not 0 < a < 1:
                errs.append(f"alphas: {a!r} is not in (0, 1)")
        if self.beta_true is not None and len(self.beta_true) != self.p:
            errs.append(f"beta: needs p={self.p} values, got {len(self.beta_true)}")
        if self.beta10 is not None and len(self.beta10) != self.q:
            errs.append(f"beta10: needs q={self.q} values, got {len(self.beta10)}")
        if self.test is not None:
            if len(self.test) != self.q or len(set(self.test)) != len(self.test) or \
                    any(not 0 <= j < self.p for j in self.test):
                errs.append(f"test: needs {self.q} distinct column indices in [0, {self.p})")
        if self.bootstrap_B is not None and self.bootstrap_B < 1:
            errs.append(f"boot: must be a positive integer, got {self.bootstrap_B!r}")
        if self.delta_grid is not None and len(self.delta_grid) == 0:
            errs.append("delta_grid: must not be empty")
        if self.calibration_replicates < 1:
            errs.append("calibration: must be a positive integer")
        return errs

    @property
    def law(self):
        return kernel(self.family)

    def covariates(self) -> np.ndarray:
        """Intercept column plus ``p - 1`` U(0, 1) covariates, fixed by ``covariate_seed``."""
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.covariate_seed)))
        return np.column_stack([np.ones(self.n), rng.random((self.n, self.p - 1))])

    def partition(self) -> DesignPartition:
        return DesignPartition(self.covariates(), self.test, self.beta10)

    def with_tested(self, delta: float) -> "SimDesign":
        b = list(self.beta_true)
        for j in self.test:
            b[j] = delta
        return replace(self, beta_true=tuple(b))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, m) -> "SimDesign":
        errors = []

        def get(key, conv, default=None):
            if key not in m or str(m[key]).strip() == "":
                return default
            try:
                return conv(str(m[key]))
            except (TypeError, ValueError):
                errors.append(f"{key}: cannot parse {m[key]!r}")
                return default

        def floats(s):
            return tuple(float(v) for v in s.replace(";", ",").split(",") if v.strip())

        def ints(s):
            return tuple(int(v) for v in s.replace(";", ",").split(",") if v.strip())

        known = {"family", "n", "p", "q", "phi", "beta", "beta10", "alphas", "reps", "boot", "seeds",
                 "delta_grid", "calibration", "test", "name"}
        for key in m:
            if key not in known:
                errors.append(f"{key}: unknown key")
        for key in ("family", "n", "p", "q"):
            if key not in m:
                errors.append(f"{key}: required")
        seeds = get("seeds", ints, (2024, 1))
        if len(seeds) != 2:
            errors.append("seeds: needs two integers (covariate seed, noise seed)")
            seeds = (2024, 1)
        kw = dict(
            family=get("family", str.strip, "normal"),
            n=get("n", int, 1),
            p=get("p", int, 1),
            q=get("q", int, 1),
            phi=get("phi", float, 3.0),
            beta_true=get("beta", floats),
            beta10=get("beta10", floats),
            alphas=get("alphas", floats, (0.10, 0.05, 0.01)),
            replicates=get("reps", int, 15000),
            bootstrap_B=get("boot", int),
            covariate_seed=seeds[0],
            noise_seed=seeds[1],
            delta_grid=get("delta_grid", floats),
            calibration_replicates=get("calibration", int, 100_000),
            test=get("test", ints),
            name=get("name", str.strip, ""),
        )
        try:
            design = cls(**kw)
        except ConfigError as exc:
            errors.extend(exc.errors)
            design = None
        except ValueError as exc:
            errors.append(str(exc))
            design = None
        if errors:
            raise ConfigError(errors)
        return design


def bundled_designs() -> list[str]:
    root = resources.files("symreg") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def load_design(source, **overrides) -> SimDesign:
    """Read a design from an INI file, INI text, or a bundled design name.

    The file has one ``[design]`` section with keys ``family``, ``n``,
    ``p``, ``q``, ``phi``, ``beta``, ``beta10``, ``alphas``, ``reps``,
    ``boot``, ``seeds`` (covariate seed, noise seed), ``delta_grid``,
    ``calibration`` and ``test``.  Lists are comma separated.
    """
    text = None
    name = ""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        path = Path(source)
        if path.is_file():
            text = path.read_text(encoding="utf-8")
            name = path.stem
        else:
            res = resources.files("symreg") / "configs" / f"{source}.ini"
            if res.is_file():
                text = res.read_text(encoding="utf-8")
                name = str(source)
            else:
                raise ConfigError([f"no design file or bundled design named {source!r} "
                                   f"(bundled: {', '.join(bundled_designs())})"])
    else:
        text = str(source)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"unreadable design file: {exc}"]) from None
    if not cp.has_section("design"):
        raise ConfigError(["missing [design] section"])
    m = dict(cp["design"])
    m.setdefault("name", name)
    design = SimDesign.from_mapping(m)
    if overrides:
        design = replace(design, **{k: v for k, v in overrides.items() if v is not None})
    return design


@dataclass
class SimResult:
    """Rejection rates (percent) per statistic and level.

    ``rates[stat][alpha]`` and ``mc_se[stat][alpha]`` are in percent;
    ``critical_values[stat][alpha]`` are empirical null quantiles of each
    analytic statistic.  ``values`` keeps the simulated statistics.
    """

    design: SimDesign
    replicates: int
    failure_count: int
    rates: dict
    mc_se: dict
    critical_values: dict
    values: dict = field(repr=False, default_factory=dict)

    def to_json(self) -> dict:
        def clean(d):
            return {k: {str(a): (None if v is None or not math.isfinite(v) else v) for a, v in row.items()}
                    for k, row in d.items()}

        return {
            "design": self.design.to_dict(),
            "replicates": self.replicates,
            "failure_count": self.failure_count,
            "rates": clean(self.rates),
            "mc_se": clean(self.mc_se),
            "critical_values": clean(self.critical_values),
        }


@dataclass
class PowerResult:
    """Size-corrected rejection rates (percent) along ``delta_grid``.

    ``rates[stat][alpha]`` is a list aligned with ``delta_grid``.
    """

    design: SimDesign
    delta_grid: tuple
    critical_values: dict
    rates: dict
    mc_se: dict
    failure_count: int
    calibration_replicates: int

    def to_json(self) -> dict:
        return {
            "design": self.design.to_dict(),
            "delta_grid": list(self.delta_grid),
            "calibration_replicates": self.calibration_replicates,
            "failure_count": self.failure_count,
            "critical_values": {k: {str(a): v for a, v in r.items()} for k, r in self.critical_values.items()},
            "rates": {k: {str(a): list(v) for a, v in r.items()} for k, r in self.rates.items()},
            "mc_se": {k: {str(a): list(v) for a, v in r.items()} for k, r in self.mc_se.items()},
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("delta,alpha," + ",".join(LABELS[k] for k in ANALYTIC) + "\n")
        for a in self.design.alphas:
            for i, d in enumerate(self.delta_grid):
                row = [f"{d:g}", f"{a:g}"] + [f"{self.rates[k][a][i]:.4f}" for k in ANALYTIC]
                buf.write(",".join(row) + "\n")
        return buf.getvalue()


class _Context:
    """Per-study quantities shared by all chunks (picklable)."""

    def __init__(self, design: SimDesign):
        self.design = design
        self.law = design.law
        self.part = design.partition()
        try:
            cc = correction_coefficients(self.part, correction_constants(self.law))
        except UnsupportedCorrection:
            cc = None
        self.coef = cc


def _simulate_chunk(bounds, *, ctx: _Context, beta, domain, bootstrap_B, self_test):
    lo, hi = bounds
    d = ctx.design
    part, law = ctx.part, ctx.law
    n = d.n
    eps = np.empty((n, hi - lo))
    for i in range(lo, hi):
        eps[:, i - lo] = law.sample(stream(d.noise_seed, domain, i), n)
    Y = (part.X @ np.asarray(beta))[:, None] + d.phi * eps
    fu = fit_batch(part.X, Y, law)
    fr = fit_batch(part.X2, Y - part.offset[:, None], law)
    raw = statistics_batch(part, law, Y, fu, fr)
    if ctx.coef is not None:
        corr = apply_corrections(raw, ctx.coef)
    else:
        corr = {k: np.full(hi - lo, np.nan) for k in ("s_lr_star", "s_r_star", "s_t_star")}
    out = {**raw, **corr}
    ok = fu.ok & fr.ok
    if self_test:
        out["chi2_draw"] = np.array([stream(d.noise_seed, _SELF_DOMAIN, i).chisquare(d.q) for i in range(lo, hi)])
    if bootstrap_B:
        pv = np.full((4, hi - lo), np.nan)
        boot_fail = 0
        for i in range(lo, hi):
            c = i - lo
            if not ok[c]:
                continue
            b_null = part.full_beta(part.beta10, fr.beta[:, c])
            bs, bok = replicate_statistics(part, law, b_null, fr.phi[c], bootstrap_B, d.noise_seed,
                                           key=(_BOOT_DOMAIN, i))
            boot_fail += int((~bok).sum())
            obs = np.array([raw[k][c] for k in RAW])[:, None]
            good = bs[:, bok]
            pv[:, c] = (1 + np.count_nonzero(good >= obs, axis=1)) / (good.shape[1] + 1)
        for j, k in enumerate(BOOT):
            out[k] = pv[j]
        out["_boot_failures"] = boot_fail
    return out, ok


def _run(design: SimDesign, beta, domain, reps, threads, bootstrap_B=None, self_test=False, ctx=None):
    ctx = ctx or _Context(design)
    chunks = [(lo, min(lo + CHUNK, reps)) for lo in range(0, reps, CHUNK)]
    work = partial(_simulate_chunk, ctx=ctx, beta=tuple(beta), domain=domain,
                   bootstrap_B=bootstrap_B, self_test=self_test)
    parts = run_chunks(work, chunks, threads)
    keys = [k for k in parts[0][0] if not k.startswith("_")]
    values = {k: np.concatenate([p[0][k] for p in parts]) for k in keys}
    ok = np.concatenate([p[1] for p in parts])
    failures = int((~ok).sum())
    if failures > MAX_FAILURE_RATE * reps:
        raise SimulationError(
            f"{failures} of {reps} replicate fits failed (limit {MAX_FAILURE_RATE:.0%}) for {design.family}"
        )
    if bootstrap_B:
        bf = sum(p[0]["_boot_failures"] for p in parts)
        if bf > MAX_FAILURE_RATE * bootstrap_B * reps:
            raise SimulationError(f"{bf} bootstrap refits failed (limit {MAX_FAILURE_RATE:.0%})")
    return {k: v[ok] for k, v in values.items()}, failures


def _null_beta(design: SimDesign):
    b = list(design.beta_true)
    for j, v in zip(design.test, design.beta10):
        b[j] = v
    return b


def _upper_quantile(x, alpha):
    # smallest c with at most a fraction alpha of the sample above it
    x = np.sort(x[np.isfinite(x)])
    if x.size == 0:
        return math.nan
    k = min(x.size - 1, int(math.ceil((1.0 - alpha) * x.size - 1e-9)) - 1)
    return float(x[max(k, 0)])


def _rate(reject):
    r = float(np.mean(reject)) if reject.size else math.nan
    return 100.0 * r, 100.0 * math.sqrt(r * (1.0 - r) / reject.size) if reject.size else math.nan


def size_study(design: SimDesign, *, threads: int = 1, self_test: bool = False) -> SimResult:
    """Null rejection rates of every statistic.

    Analytic statistics reject when they exceed the ``1 - alpha`` quantile
    of chi-squared with ``q`` degrees of freedom; bootstrap tests (when
    ``design.bootstrap_B`` is set) reject when their p-value is at most
    ``alpha``.  With ``self_test`` an extra column ``chi2_draw`` holds exact
    chi-squared draws, which checks the tabulation itself.

    Raises
    ------
    SimulationError
        If more than 1% of the replicate fits fail.
    """
    values, failures = _run(design, _null_beta(design), _SIZE_DOMAIN, design.replicates, threads,
                            bootstrap_B=design.bootstrap_B, self_test=self_test)
    rates, se, crit = {}, {}, {}
    for k, v in values.items():
        rates[k], se[k], crit[k] = {}, {}, {}
        for a in design.alphas:
            if k in BOOT:
                rej = v <= a + 1e-12
            else:
                if np.all(np.isnan(v)):
                    rates[k][a] = se[k][a] = crit[k][a] = math.nan
                    continue
                rej = v > stats.chi2.isf(a, design.q)
                crit[k][a] = _upper_quantile(v, a)
            rates[k][a], se[k][a] = _rate(rej)
    return SimResult(design, int(next(iter(values.values())).size), failures, rates, se, crit, values)


def power_study(design: SimDesign, *, threads: int = 1, calibration: int | None = None) -> PowerResult:
    """Size-corrected power of the analytic tests along ``design.delta_grid``.

    Critical values are the empirical ``1 - alpha`` quantiles of each
    statistic over ``calibration`` null replicates.  All grid points reuse
    the same error draws, so differences between points are not blurred by
    independent noise.
    """
    if not design.delta_grid:
        raise ConfigError(["delta_grid: required for a power study"])
    cal = int(calibration or design.calibration_replicates)
    ctx = _Context(design)
    cal_values, cal_fail = _run(design, _null_beta(design), _CAL_DOMAIN, cal, threads, ctx=ctx)
    crit = {k: {a: _upper_quantile(cal_values[k], a) for a in design.alphas} for k in ANALYTIC}
    rates = {k: {a: [] for a in design.alphas} for k in ANALYTIC}
    se = {k: {a: [] for a in design.alphas} for k in ANALYTIC}
    failures = cal_fail
    for delta in design.delta_grid:
        vals, f = _run(design, design.with_tested(delta).beta_true, _POWER_DOMAIN, design.replicates,
                       threads, ctx=ctx)
        failures += f
        for k in ANALYTIC:
            for a in design.alphas:
                r, s = _rate(vals[k] > crit[k][a]) if math.isfinite(crit[k][a]) else (math.nan, math.nan)
                rates[k][a].append(r)
                se[k][a].append(s)
    return PowerResult(design, tuple(design.delta_grid), crit, rates, se, failures, cal)


def table_report(results: SimResult | Sequence[SimResult], fmt: str = "text") -> str:
    """Render rejection rates with one row per (design, alpha).

    ``fmt`` is ``"text"`` (aligned columns) or ``"csv"``.  Columns follow
    the order S_W, S_LR, S_R, S_T, S*_LR, S*_R, S*_T, S^b_W, S^b_LR,
    S^b_R, S^b_T; missing entries are ``NA``.
    """
    if isinstance(results, SimResult):
        results = [results]
    head = ["family", "q", "n", "alpha"] + [LABELS[k] for k in COLUMNS]
    rows = []
    for res in results:
        d = res.design
        for a in d.alphas:
            cells = [d.family, str(d.q), str(d.n), f"{100 * a:g}"]
            for k in COLUMNS:
                v = res.rates.get(k, {}).get(a)
                cells.append("NA" if v is None or not math.isfinite(v) else f"{v:.2f}")
            rows.append(cells)
    if fmt == "csv":
        return "\n".join(",".join(r) for r in [head] + rows) + "\n"
    if fmt != "text":
        raise ValueError("fmt must be 'text' or 'csv'")
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in [head] + rows]
    return "\n".join(lines) + "\n"


def result_json(result) -> str:
    return json.dumps(result.to_json(), indent=2, allow_nan=False)
