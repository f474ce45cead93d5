"""Random-rotation forests and the scaling of their visibility functions.

A sweep draws rotations (or unipotent shears), builds the forest, estimates
``V(eps)`` on a ladder ``eps = 2^-l`` and fits the log-log slope, which the
metrical theory bounds by ``d + sigma_d(k)`` (plus any positive slack).
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import BudgetExceeded, InvalidRegime, SearchBudgetExceeded
from .forest import (DEFAULT_CELL_BUDGET, Forest, anchor_plan, build_rotated_union,
                     build_unipotent, covering_radius, visibility_profile)
from .linalg import Matrix, haar_rotations
from .rationality import DEFAULT_HEIGHT, DEFAULT_TOL, dense_forest_check
from .spherecover import build_cap_cover, circle_count

__all__ = [
    "sigma", "BudgetVerdict", "borel_cantelli_budget", "ExperimentManifest",
    "ExperimentResult", "Membership", "a_l_membership", "run_experiment",
    "summarize_rows", "fit_slope", "RAW_FIELDS",
]


def sigma(d: int, k: int) -> float:
    """The exponent penalty ``d^2 (d+1) / (k - d^2)``; needs ``k > d^2``."""
    if k <= d * d:
        raise InvalidRegime(f"need k > d^2 = {d * d}, got k = {k}")
    return d * d * (d + 1) / (k - d * d)


@dataclass(frozen=True)
class BudgetVerdict:
    exponent: float
    converges: bool
    threshold: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


def borel_cantelli_budget(d: int, k: int, lam: float) -> BudgetVerdict:
    """Exponent ``d(1 + lam + d) - k lam / d`` of the series over the sets A_l.

    The series converges when the exponent is negative.  ``threshold`` is the
    ``lam`` at which the exponent vanishes (None when it never does).
    """
    if d < 1 or k < 1 or not lam > 0:
        raise ValueError("need d, k >= 1 and lam > 0")
    e = d * (1 + lam + d) - k * lam / d
    thr = d * d * (d + 1) / (k - d * d) if k > d * d else None
    return BudgetVerdict(e, e < 0, thr)


PRESETS = {
    "identity": None,
    "honeycomb": [[1.0, 0.5], [0.0, 0.8660254037844386]],
}


def resolve_matrix(entry, n: int) -> Matrix:
    if isinstance(entry, str):
        if entry not in PRESETS:
            raise ValueError(f"unknown matrix preset {entry!r}")
        if entry == "identity":
            return Matrix.from_entries(np.eye(n, dtype=int).tolist())
        m = np.array(PRESETS[entry], float)
        if m.shape != (n, n):
            raise ValueError(f"preset {entry!r} is {m.shape[0]}-dimensional")
        return Matrix(m)
    if isinstance(entry, Matrix):
        return entry
    return Matrix.from_entries(entry)


@dataclass
class ExperimentManifest:
    """Declarative description of a sweep.

    ``mode`` is ``"rotations"`` (Haar rotations R_i M_i), ``"unipotent"``
    (M_i T(x_i), x_i uniform in a box, then all rotated copies) or
    ``"fixed"`` (the matrices as given).  ``levels`` are the l of
    ``eps = 2^-l``, strictly increasing.
    """

    d: int
    k: int
    matrices: list = field(default_factory=lambda: ["identity"])
    mode: str = "rotations"
    levels: list = field(default_factory=lambda: [3, 4, 5, 6, 7])
    samples: int = 20
    seed: int = 0
    anchors: Optional[int] = None
    height: int = DEFAULT_HEIGHT
    tolerance: float = DEFAULT_TOL
    search_budget: int = 10 ** 9
    l_max: Optional[float] = None
    cell_budget: int = DEFAULT_CELL_BUDGET
    lambda_target: Optional[float] = None
    U1: float = 1.0
    U2: float = 1.0
    cover_scale: float = 0.125
    unipotent_box: float = 10.0
    membership_max_level: int = 6
    workers: int = 1
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.d < 1 or self.k < 1:
            raise ValueError("need d >= 1 and k >= 1")
        if self.mode not in ("rotations", "unipotent", "fixed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        lv = [int(x) for x in self.levels]
        if not lv or any(b <= a for a, b in zip(lv, lv[1:])) or lv[0] < 0:
            raise ValueError("levels must be strictly increasing non-negative integers")
        self.levels = lv
        if isinstance(self.matrices, (str, Matrix)):
            self.matrices = [self.matrices]
        if len(self.matrices) == 1 and self.k > 1:
            self.matrices = list(self.matrices) * self.k
        if len(self.matrices) != self.k:
            raise ValueError(f"expected {self.k} matrices, got {len(self.matrices)}")
        if self.samples < 1:
            raise ValueError("samples must be positive")
        if not 0 < self.cover_scale <= 1:
            raise ValueError("cover_scale must lie in (0, 1]")
        for m in self.matrices:
            resolve_matrix(m, self.d + 1)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentManifest":
        data = dict(data)
        if "epsilons" in data:
            eps = data.pop("epsilons")
            lv = [-math.log2(e) for e in eps]
            if any(abs(x - round(x)) > 1e-12 for x in lv):
                raise ValueError("epsilons must be powers of two")
            data["levels"] = [int(round(x)) for x in lv]
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown manifest keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["matrices"] = [m if isinstance(m, str) else _entries(m) for m in self.matrices]
        out["lambda_target"] = self.target()
        return out

    @property
    def n(self) -> int:
        return self.d + 1

    @property
    def epsilons(self) -> list[float]:
        return [2.0 ** -l for l in self.levels]

    def target(self) -> float:
        """lambda_target, defaulting to sigma_d(k) + 1/2 (or 1 outside k > d^2)."""
        if self.lambda_target is not None:
            return float(self.lambda_target)
        return sigma(self.d, self.k) + 0.5 if self.k > self.d ** 2 else 1.0

    def f(self, eps: float) -> float:
        return eps ** (-self.d - self.target())

    def base_matrices(self) -> list[Matrix]:
        return [resolve_matrix(m, self.n) for m in self.matrices]


def _entries(m):
    if isinstance(m, Matrix):
        if m.exact is not None:
            return [[_fmt_fraction(x) for x in row] for row in m.exact]
        return m.values.tolist()
    return m


def _fmt_fraction(x):
    return int(x) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


# ---------------------------------------------------------------------------
# A_l membership
# ---------------------------------------------------------------------------

@dataclass
class Membership:
    member: bool
    level: int
    b: Optional[np.ndarray] = None
    qs: Optional[list] = None

    def to_dict(self) -> dict:
        return {"member": self.member, "level": self.level,
                "b": None if self.b is None else [float(x) for x in self.b],
                "q": None if self.qs is None else [list(map(int, q)) for q in self.qs]}


def _q_vectors(n: int, qmax: float) -> np.ndarray:
    """Integer q with 0 < ||q||_inf < qmax, first nonzero entry positive,
    ordered by sup norm then lexicographically."""
    Q = math.ceil(qmax) - 1
    if Q < 1:
        return np.zeros((0, n), dtype=np.int64)
    r = np.arange(-Q, Q + 1)
    P = np.stack(np.meshgrid(*[r] * n, indexing="ij"), axis=-1).reshape(-1, n)
    P = P[np.any(P != 0, axis=1)]
    first = P[np.arange(len(P)), np.argmax(P != 0, axis=1)]
    P = P[first > 0]
    sup = np.max(np.abs(P), axis=1)
    P = P[sup < qmax]
    sup = sup[sup < qmax]
    order = np.lexsort(tuple(P[:, i] for i in range(n - 1, -1, -1)) + (sup,))
    return P[order]


def a_l_membership(rotations: Sequence, l: int, lambda_target: float,
                   manifest: ExperimentManifest, budget: int = 10 ** 8) -> Membership:
    """Whether some ``b`` in the level-l direction set D_l and integer
    ``q_i`` with ``0 < ||q_i||_inf < 2^l U1 f^(1-1/d)`` satisfy
    ``psi([b], [R_i M_i q_i]) < U2 / (||q_i||_inf f^(1/d))`` for every i,
    where ``f = 2^(l (d + lambda_target))``.

    D_l is the cap cover of radius ``2^-l / f``.  For d = 1 the admissible
    directions form a union of arcs and D_l is an arithmetic progression of
    angles, so the check is exact and cheap; for d >= 2 it is a direct scan.
    """
    d = manifest.d
    eps = 2.0 ** -l
    f = eps ** (-d - lambda_target)
    qmax = 2 ** l * manifest.U1 * f ** (1 - 1 / d)
    n_q = (2 * math.ceil(qmax) - 1) ** (d + 1) / 2
    if n_q > budget:
        raise SearchBudgetExceeded(f"A_l scan needs about {n_q:.3g} vectors q (budget {budget})")
    Q = _q_vectors(d + 1, qmax)
    if len(Q) == 0:
        return Membership(False, l)
    sup = np.max(np.abs(Q), axis=1).astype(float)
    radii = np.minimum(manifest.U2 / (sup * f ** (1 / d)), 1.0)
    mats = [np.asarray(R, float) @ M.values for R, M in zip(rotations, manifest.base_matrices())]
    dir_eta = eps / f
    if d == 1:
        return _membership_circle(mats, Q, radii, dir_eta, l)
    cover = build_cap_cover(d, dir_eta)
    if cover.count * len(Q) * len(mats) > budget:
        raise SearchBudgetExceeded(
            f"A_l scan needs {cover.count} x {len(Q)} x {len(mats)} checks (budget {budget})")
    alive = np.arange(cover.count)
    witness_q = []
    B = cover.centres
    for A in mats:
        W = Q @ A.T
        W /= np.linalg.norm(W, axis=1, keepdims=True)
        hit_q = np.full(len(alive), -1)
        for j0 in range(0, len(Q), 4096):
            c = np.abs(B[alive] @ W[j0:j0 + 4096].T)
            psi = np.sqrt(np.maximum(0.0, 1 - np.minimum(c, 1) ** 2))
            ok = psi < radii[j0:j0 + 4096][None, :]
            first = np.where(ok.any(axis=1), np.argmax(ok, axis=1) + j0, -1)
            hit_q = np.where((hit_q < 0) & (first >= 0), first, hit_q)
        keep = hit_q >= 0
        alive = alive[keep]
        witness_q = [w[keep] for w in witness_q] + [hit_q[keep]]
        if alive.size == 0:
            return Membership(False, l)
    return Membership(True, l, B[alive[0]], [tuple(Q[w[0]]) for w in witness_q])


def _membership_circle(mats, Q, radii, dir_eta, l):
    """Exact d = 1 membership via arcs on the projective circle [0, pi)."""
    N = circle_count(dir_eta)
    step = math.pi / N
    half = np.arcsin(radii)
    allowed = None
    per_grid = []
    for A in mats:
        W = Q @ A.T
        theta = np.mod(np.arctan2(W[:, 1], W[:, 0]), math.pi)
        per_grid.append(theta)
        ivs = _arc_union(theta - half, theta + half)
        allowed = ivs if allowed is None else _intersect(allowed, ivs)
        if not allowed:
            return Membership(False, l)
    for lo, hi in allowed:
        # prefer the grid direction nearest the middle of the arc
        j = round(0.5 * (lo + hi) / step)
        if not lo < j * step < hi:
            j = math.floor(lo / step) + 1
        if j * step < hi:
            ang = (j % N) * step
            b = np.array([math.cos(ang), math.sin(ang)])
            qs = []
            for theta in per_grid:
                diff = np.abs(np.mod(theta - ang + math.pi / 2, math.pi) - math.pi / 2)
                ok = np.flatnonzero(np.sin(diff) < radii)
                if ok.size == 0:
                    break
                qs.append(tuple(Q[ok[0]]))
            else:
                return Membership(True, l, b, qs)
    return Membership(False, l)


def _arc_union(lo, hi):
    """Union of open arcs (lo, hi) mod pi as sorted disjoint intervals in
    [0, 2 pi); arcs are unrolled so that wrap-around is handled by a second
    copy shifted by pi."""
    lo = np.concatenate([lo, lo + math.pi])
    hi = np.concatenate([hi, hi + math.pi])
    order = np.argsort(lo)
    out = []
    for a, b in zip(lo[order], hi[order]):
        if out and a < out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def _intersect(A, B):
    out = []
    i = j = 0
    while i < len(A) and j < len(B):
        lo, hi = max(A[i][0], B[j][0]), min(A[i][1], B[j][1])
        if lo < hi:
            out.append((lo, hi))
        if A[i][1] < B[j][1]:
            i += 1
        else:
            j += 1
    return out


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

RAW_FIELDS = ["sample_id", "level", "epsilon", "V_hat", "blocked_flag", "over_budget",
              "certified", "queries", "witness_grid", "witness_coords", "witness_anchor",
              "witness_direction", "a_l_member", "verdict", "error"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _vec(v) -> str:
    return "" if v is None else ";".join(repr(float(x)) for x in v)


def _draw(manifest: ExperimentManifest, rng: np.random.Generator):
    """Matrices, rotations and translations for one sample."""
    base = manifest.base_matrices()
    n = manifest.n
    if manifest.mode == "rotations":
        R = haar_rotations(manifest.d, manifest.k, rng)
        mats = [R[i] @ base[i].values for i in range(manifest.k)]
    elif manifest.mode == "unipotent":
        R = np.broadcast_to(np.eye(n), (manifest.k, n, n))
        x = rng.uniform(-manifest.unipotent_box, manifest.unipotent_box, (manifest.k, manifest.d))
        mats = [base[i].values @ build_unipotent(x[i]).values for i in range(manifest.k)]
    else:
        R = np.broadcast_to(np.eye(n), (manifest.k, n, n))
        mats = [b for b in base]
    g = [np.asarray(m if not isinstance(m, Matrix) else m.values) @ rng.random(n) for m in mats]
    forest = Forest.from_matrices(mats, g)
    if manifest.mode == "unipotent":
        forest = build_rotated_union(forest)
    return forest, R


def _run_sample(args):
    manifest, s = args
    rng = np.random.default_rng(np.random.SeedSequence([manifest.seed, s]))
    forest, R = _draw(manifest, rng)
    rows = []
    try:
        verdict = dense_forest_check(forest.matrices, manifest.height, manifest.tolerance,
                                     manifest.search_budget).status
    except BudgetExceeded as e:
        verdict = f"budget: {e}"
    lam = manifest.target()
    covers = [build_cap_cover(manifest.d, max(eps / manifest.f(eps), manifest.cover_scale * eps))
              for eps in manifest.epsilons]
    rho = max(covering_radius(g).value for g in forest.grids)
    anchors = anchor_plan(manifest.n, rho, manifest.anchors)
    for l, eps, cover in zip(manifest.levels, manifest.epsilons, covers):
        row = {"sample_id": s, "level": l, "epsilon": eps, "verdict": verdict}
        try:
            (p,) = visibility_profile(forest, [eps], [cover], anchors, manifest.l_max,
                                      manifest.cell_budget)
            row.update(V_hat=p.v_hat, blocked_flag=p.blocked, over_budget=p.over_budget,
                       certified=p.certified, queries=p.queries, witness_grid=p.grid,
                       witness_coords=None if p.coords is None else ";".join(map(str, p.coords)),
                       witness_anchor=_vec(p.anchor), witness_direction=_vec(p.direction))
        except BudgetExceeded as e:
            row.update(V_hat=math.inf, over_budget=True, error=str(e))
        if manifest.mode == "rotations" and l <= manifest.membership_max_level:
            try:
                row["a_l_member"] = a_l_membership(R, l, lam, manifest).member
            except BudgetExceeded as e:
                row["error"] = (row.get("error") or "") + f"membership: {e}"
        rows.append({k: _fmt(row.get(k)) for k in RAW_FIELDS})
    return rows


def fit_slope(levels_eps, v_hat):
    """Least-squares fit of log V against log(1/eps): (slope, intercept, residuals)."""
    x = np.log(1.0 / np.asarray(levels_eps, float))
    y = np.log(np.asarray(v_hat, float))
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0]), float(coef[1]), (y - A @ coef).tolist()


def summarize_rows(rows: list[dict], manifest: ExperimentManifest) -> dict:
    """Per-sample fits and pass rates, derived from raw CSV rows only."""
    d = manifest.d
    by_sample: dict[int, list] = {}
    for r in rows:
        by_sample.setdefault(int(r["sample_id"]), []).append(r)
    sig = sigma(d, manifest.k) if manifest.k > d * d else None
    upper = d + (sig if sig is not None else manifest.target()) + 0.5
    lower = d - 0.2
    samples = []
    for s in sorted(by_sample):
        rs = by_sample[s]
        eps = [float(r["epsilon"]) for r in rs]
        v = [float(r["V_hat"]) for r in rs]
        blocked = [r["blocked_flag"] == "1" for r in rs]
        usable = [(e, x) for e, x, b in zip(eps, v, blocked) if not b and math.isfinite(x) and x > 0]
        entry = {"sample_id": s, "verdict": rs[0]["verdict"], "blocked_levels": sum(blocked),
                 "usable_points": len(usable)}
        if len(usable) >= 4:
            slope, icpt, res = fit_slope(*zip(*usable))
            entry.update(status="ok", slope=slope, intercept=icpt, residuals=res)
        else:
            entry.update(status="inconclusive", slope=None, intercept=None, residuals=None)
        entry["a_l_member"] = [r["a_l_member"] == "1" if r["a_l_member"] else None for r in rs]
        samples.append(entry)
    slopes = [e["slope"] for e in samples if e["status"] == "ok"]
    n = len(samples)
    return {
        "config": manifest.to_dict(),
        "sigma": sig,
        "lambda_target": manifest.target(),
        "slope_upper": upper,
        "slope_lower": lower,
        "samples": samples,
        "fitted": len(slopes),
        "pass_rate_upper": sum(s <= upper for s in slopes) / n,
        "pass_rate_lower": sum(s >= lower for s in slopes) / n,
        "slope_quantiles": None if not slopes else
            dict(zip(["min", "q25", "median", "q75", "max"],
                     [float(x) for x in np.quantile(slopes, [0, .25, .5, .75, 1])])),
    }


@dataclass
class ExperimentResult:
    manifest: ExperimentManifest
    rows: list
    summary: dict

    def raw_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=RAW_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows)
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps(self.summary, sort_keys=True, indent=2, allow_nan=True) + "\n"

    def write(self, outdir: str) -> tuple[str, str]:
        """Persist the raw rows, then the summary derived from them."""
        os.makedirs(outdir, exist_ok=True)
        raw = os.path.join(outdir, "raw.csv")
        with open(raw, "w", newline="") as fh:
            fh.write(self.raw_csv())
        summ = os.path.join(outdir, "summary.json")
        with open(summ, "w") as fh:
            fh.write(self.summary_json())
        return raw, summ


def read_raw_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_experiment(manifest: ExperimentManifest, workers: Optional[int] = None,
                   outdir: Optional[str] = None) -> ExperimentResult:
    """Run every sample (in parallel when ``workers > 1``), persist raw rows
    and derive the summary from them.  Budget errors are recorded per row."""
    workers = manifest.workers if workers is None else workers
    outdir = manifest.output_dir if outdir is None else outdir
    jobs = [(manifest, s) for s in range(manifest.samples)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            chunks = list(ex.map(_run_sample, jobs))
    else:
        chunks = [_run_sample(j) for j in jobs]
    rows = [r for c in chunks for r in c]
    result = ExperimentResult(manifest, rows, {})
    if outdir is not None:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "raw.csv"), "w", newline="") as fh:
            fh.write(result.raw_csv())
        rows = read_raw_csv(os.path.join(outdir, "raw.csv"))
    result.summary = summarize_rows(rows, manifest)
    if outdir is not None:
        result.write(outdir)
    return result
