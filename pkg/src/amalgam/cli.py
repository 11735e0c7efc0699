"""Command-line driver: seeded random instances, check suites, JSON reports.

Suites
------
``rs``
    composition identities tying the R- and S-transforms together.
``dilation``
    scaling of the S-transform by an invertible subalgebra element.
``additivity``
    R-additivity on synthesized free pairs at truncation order.
``multiplicativity``
    S-multiplicativity on synthesized free pairs (diagonal B).
``irreducible``
    alternating interval-refinement sum vs irreducible-partition sum.
``domains``
    certified fixed-point inversion: contraction, residual, preimage ball.
``all``
    every suite above.

Reports are deterministic functions of (seed, config): a single
counter-based generator keyed by (seed, trial, purpose) drives all
sampling, and volatile data such as wall time only goes to stdout, never
into the report file.  Exit status: 0 all trials passed, 1 any failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
import warnings
import zlib
from dataclasses import dataclass, asdict

import numpy as np

from . import __version__
from . import algebra
from . import distributions as fd
from . import noncrossing as nc
from . import transforms as tr
from .errors import AmalgamError

SUITES = (
    "rs",
    "dilation",
    "additivity",
    "multiplicativity",
    "irreducible",
    "domains",
    "all",
)


@dataclass(frozen=True)
class RunConfig:
    suite: str
    ambient_dim: int
    subalgebra: str          # "diagonal" or "block"
    block: tuple | None      # (k, d) when subalgebra == "block"
    diag: int                # coordinate dimension for truncated suites
    trials: int
    seed: int
    tol: float
    order: int
    ball_fraction: float
    negative_control: bool
    out: str | None

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ValueError(f"unknown suite {self.suite!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0.0 < self.ball_fraction <= 1.0:
            raise ValueError("ball fraction must be in (0, 1]")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")

    def context(self):
        if self.subalgebra == "block":
            return algebra.AlgebraContext.block_tensor(*self.block)
        return algebra.AlgebraContext.diagonal(self.ambient_dim)


def rng_for(cfg, trial, purpose):
    """Deterministic generator keyed by (seed, trial, purpose tag)."""
    tag = zlib.crc32(purpose.encode("utf-8"))
    return np.random.default_rng(
        np.random.SeedSequence([cfg.seed & 0xFFFFFFFFFFFFFFFF, trial, tag])
    )


# -- samplers ----------------------------------------------------------

def sample_matrix(rng, m, target_norm=1.0):
    """Complex-gaussian matrix rescaled to the target operator norm."""
    g = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    n = algebra.op_norm(g)
    if n == 0.0:
        return np.zeros((m, m), dtype=np.complex128)
    return (target_norm / n) * g


def sample_b_vector(rng, k, target_norm, floor=0.1):
    """Invertible coordinate vector with sup norm exactly target_norm.

    Entry magnitudes are floored at ``floor`` of the largest, so the
    condition of the element is at most 1/floor.
    """
    mags = rng.uniform(floor, 1.0, size=k)
    mags = mags / np.max(mags)
    phases = np.exp(2j * np.pi * rng.uniform(0.0, 1.0, size=k))
    return target_norm * mags * phases


def sample_b_element(rng, ctx, target_norm, floor=0.1):
    """Invertible subalgebra element with norm exactly target_norm."""
    if ctx.kind == algebra.BLOCK:
        k, d = ctx.block
        lam = sample_b_vector(rng, k, target_norm, floor)
        return np.kron(np.diag(lam), np.eye(d, dtype=np.complex128))
    if ctx.kind == algebra.DIAGONAL:
        return np.diag(sample_b_vector(rng, ctx.dim, target_norm, floor))
    raise ValueError(f"no sampler for context kind {ctx.kind!r}")


def sample_context_element(rng, ctx, e_max=8.0, attempts=64):
    """Norm-one matrix whose expectation is invertible and well
    conditioned; resamples deterministically until e = |E(a)^{-1}| <= e_max.
    """
    for _ in range(attempts):
        a = sample_matrix(rng, ctx.dim, target_norm=1.0)
        ea = algebra.cond_expect(ctx, a)
        if not algebra.is_invertible_in_B(ctx, ea):
            continue
        e = algebra.op_norm(algebra.invert_in_B(ctx, ea))
        if e <= e_max:
            return a, e
    raise AmalgamError("could not sample a well-conditioned instance")


def random_cumulant_family(rng, d, n_ord, scale=0.45, kappa1_floor=None):
    """Random cumulant tensors with geometrically decaying magnitude.

    ``kappa1_floor`` forces the first cumulant's entries away from zero
    (needed wherever E(a) must be invertible).
    """
    kappas = []
    for n in range(1, n_ord + 1):
        shape = (d,) * n
        t = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        kappas.append((scale ** n) * t)
    if kappa1_floor is not None:
        mags = rng.uniform(kappa1_floor, 1.5, size=d)
        phases = np.exp(2j * np.pi * rng.uniform(0.0, 1.0, size=d))
        kappas[0] = mags * phases
    return nc.CumulantFamily(d, n_ord, tuple(kappas))


def _digest(parts):
    h = hashlib.sha256()
    for p in parts:
        arr = np.ascontiguousarray(np.asarray(p, dtype=np.complex128))
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()[:16]


def safe_probe_norm(norm_a, e, fraction):
    """A |b| such that both transform values land inside their certified
    balls at the given fraction, by the geometric series bounds."""
    rho_g = algebra.ONTO_COEFF / norm_a if norm_a > 0 else np.inf
    rho_psi = (
        algebra.ONTO_COEFF / (norm_a * norm_a * e * e) if norm_a > 0 else np.inf
    )
    cap_g = fraction * rho_g / (1.0 + norm_a * fraction * rho_g)
    cap_psi = fraction * rho_psi / (norm_a * (1.0 + fraction * rho_psi))
    return 0.999 * min(cap_g, cap_psi)


# -- trial runners -----------------------------------------------------

def _trial_rs(cfg, trial):
    ctx = cfg.context()
    a, e = sample_context_element(rng_for(cfg, trial, "rs.a"), ctx)
    model = tr.ConcreteModel(ctx, a)
    bn = safe_probe_norm(model.norm_bound, e, cfg.ball_fraction)
    b = sample_b_element(rng_for(cfg, trial, "rs.b"), ctx, bn)
    report = tr.check_rs_relation(model, b, tol=cfg.tol)
    return {
        "digest": _digest([a, b]),
        "residuals": {k: float(v) for k, v in report.residuals.items()},
        "passed": bool(report.passed),
    }


def _trial_dilation(cfg, trial):
    ctx = cfg.context()
    a, e = sample_context_element(rng_for(cfg, trial, "dil.a"), ctx)
    model = tr.ConcreteModel(ctx, a)
    zr = rng_for(cfg, trial, "dil.z")
    if ctx.kind == algebra.BLOCK:
        lam = zr.uniform(0.5, 2.0, size=ctx.block[0])
        z = np.kron(np.diag(lam), np.eye(ctx.block[1], dtype=np.complex128))
    else:
        z = np.diag(zr.uniform(0.5, 2.0, size=ctx.dim)).astype(np.complex128)
    nz = algebra.op_norm(z)
    e_z = algebra.op_norm(algebra.invert_in_B(ctx, z))
    model_za = tr.ConcreteModel(ctx, z @ a)
    e_za = algebra.op_norm(
        algebra.invert_in_B(ctx, algebra.cond_expect(ctx, z @ a))
    )
    bn = min(
        safe_probe_norm(model.norm_bound, e, cfg.ball_fraction),
        safe_probe_norm(model_za.norm_bound, e_za, cfg.ball_fraction),
        safe_probe_norm(nz, e_z, cfg.ball_fraction),
    )
    b = sample_b_element(rng_for(cfg, trial, "dil.b"), ctx, bn)
    report = tr.check_dilation(model, z, b, tol=cfg.tol)
    return {
        "digest": _digest([a, z, b]),
        "residuals": {k: float(v) for k, v in report.residuals.items()},
        "passed": bool(report.passed),
    }


def _truncated_pair(cfg, trial, purpose, kappa1_floor=None):
    d, n_ord = cfg.diag, cfg.order
    fx = random_cumulant_family(
        rng_for(cfg, trial, purpose + ".x"), d, n_ord, kappa1_floor=kappa1_floor
    )
    fy = random_cumulant_family(
        rng_for(cfg, trial, purpose + ".y"), d, n_ord, kappa1_floor=kappa1_floor
    )
    x = fd.dist_from_cumulants(fx)
    y = fd.dist_from_cumulants(fy)
    return x, y


def _scaling_record(x, y, w, report, control):
    rec = {
        "digest": _digest([x.moment(n) for n in range(1, x.N + 1)] + [w]),
        "residuals": {
            "residual": float(report.residual),
            "residual_half": float(report.residual_half),
        },
        "shrink": float(report.shrink),
        "order_effective": int(report.order_effective),
        "negative_control": bool(control),
        "passed": bool(report.passed),
    }
    return rec


def _trial_additivity(cfg, trial):
    control = cfg.negative_control
    x, y = _truncated_pair(cfg, trial, "add")
    if control:
        y = x
        joint = fd.correlated_join(x)
    else:
        joint = fd.free_join(x, y)
    s = fd.sum_dist(joint)
    radius = min(
        algebra.ONTO_COEFF / b for b in
        (x.norm_bound, y.norm_bound, s.norm_bound)
    )
    w = sample_b_vector(
        rng_for(cfg, trial, "add.w"), cfg.diag, cfg.ball_fraction * radius
    )
    report = fd.additivity_scaling_test(x, y, w, joint=joint)
    return _scaling_record(x, y, w, report, control)


def _trial_multiplicativity(cfg, trial):
    control = cfg.negative_control
    x, y = _truncated_pair(cfg, trial, "mul", kappa1_floor=0.6)
    if control:
        y = x
        joint = fd.correlated_join(x)
    else:
        joint = fd.free_join(x, y)
    p = fd.prod_dist(joint)
    models = [tr.TruncatedModel(t) for t in (x, y, p)]
    radius = np.inf
    for m in models:
        cert, _ = tr._psi_cert(m)
        radius = min(radius, cert.radius_onto)
    w = sample_b_vector(
        rng_for(cfg, trial, "mul.w"), cfg.diag, cfg.ball_fraction * radius
    )
    report = fd.multiplicativity_scaling_test(x, y, w, joint=joint)
    return _scaling_record(x, y, w, report, control)


def _trial_irreducible(cfg, trial):
    d = min(cfg.diag, 3)
    n_ord = min(cfg.order, 6)
    fam = random_cumulant_family(rng_for(cfg, trial, "irr.fam"), d, n_ord)
    b = sample_b_vector(rng_for(cfg, trial, "irr.b"), d, 0.8)
    residuals = {}
    for r in range(1, n_ord + 1):
        residuals[f"order_{r}"] = float(nc.check_irreducible_identity(fam, r, b))
    passed = all(v <= cfg.tol for v in residuals.values())
    return {
        "digest": _digest(list(fam.kappas) + [b]),
        "residuals": residuals,
        "passed": bool(passed),
    }


def _fp_record(report):
    return {
        "converged": bool(report.converged),
        "iterations": int(report.iterations),
        "final_residual": float(report.final_residual),
        "max_contraction": float(report.max_contraction),
        "preimage_norm": float(report.preimage_norm),
        "within_certified_ball": bool(report.within_certified_ball),
    }


def _trial_domains(cfg, trial):
    ctx = cfg.context()
    a, e = sample_context_element(rng_for(cfg, trial, "dom.a"), ctx)
    model = tr.ConcreteModel(ctx, a)
    c = model.norm_bound
    slack = 1e-9

    g_cert = algebra.g_certificate(c)
    w_g = sample_b_element(
        rng_for(cfg, trial, "dom.wg"), ctx, cfg.ball_fraction * g_cert.radius_onto
    )
    bg, rep_g = tr.invert_g(model, w_g, tol=cfg.tol)
    ok_g = (
        rep_g.converged
        and rep_g.max_contraction <= g_cert.contraction_bound + slack
        and rep_g.final_residual <= 100.0 * cfg.tol
        and rep_g.preimage_norm <= g_cert.radius_preimage + slack
    )

    psi_cert = algebra.psi_certificate(c, e)
    w_p = sample_b_element(
        rng_for(cfg, trial, "dom.wp"), ctx, cfg.ball_fraction * psi_cert.radius_onto
    )
    bp, rep_p = tr.invert_psi(model, w_p, tol=cfg.tol)
    ok_p = (
        rep_p.converged
        and rep_p.max_contraction <= psi_cert.contraction_bound + slack
        and rep_p.final_residual <= 100.0 * cfg.tol
        and rep_p.preimage_norm <= psi_cert.radius_preimage + slack
    )
    return {
        "digest": _digest([a, w_g, w_p]),
        "residuals": {
            "g_residual": float(rep_g.final_residual),
            "psi_residual": float(rep_p.final_residual),
        },
        "fixed_point": {"g": _fp_record(rep_g), "psi": _fp_record(rep_p)},
        "passed": bool(ok_g and ok_p),
    }


_RUNNERS = {
    "rs": _trial_rs,
    "dilation": _trial_dilation,
    "additivity": _trial_additivity,
    "multiplicativity": _trial_multiplicativity,
    "irreducible": _trial_irreducible,
    "domains": _trial_domains,
}


def gen_instance(cfg, trial):
    """Seeded instance material for one trial of the configured suite.

    Only used for inspection; the suite runners draw from the same keyed
    generators, so digests match.
    """
    ctx = cfg.context() if cfg.suite in ("rs", "dilation", "domains") else None
    out = {"suite": cfg.suite, "trial": trial}
    if ctx is not None:
        prefix = {"rs": "rs", "dilation": "dil", "domains": "dom"}[cfg.suite]
        a, e = sample_context_element(rng_for(cfg, trial, prefix + ".a"), ctx)
        out["a"] = a
        out["inv_expectation_norm"] = e
    return out


def run_suite(cfg):
    """Run the configured suite; deterministic given (seed, config)."""
    names = [s for s in SUITES if s != "all"] if cfg.suite == "all" else [cfg.suite]
    trials = []
    for name in names:
        runner = _RUNNERS[name]
        sub = RunConfig(**{**asdict(cfg), "suite": name})
        for t in range(cfg.trials):
            record = {"suite": name, "trial": t}
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    record.update(runner(sub, t))
            except AmalgamError as exc:
                record.update(
                    {
                        "digest": None,
                        "residuals": {},
                        "passed": False,
                        "error": f"{type(exc).__name__}: {exc}",
                    }
                )
            record.setdefault("error", None)
            trials.append(record)
    n_pass = sum(1 for rec in trials if rec["passed"])
    residual_values = [
        v for rec in trials for v in rec["residuals"].values() if np.isfinite(v)
    ]
    report = {
        "tool_version": __version__,
        "config": _config_echo(cfg),
        "trials": trials,
        "aggregate": {
            "n_trials": len(trials),
            "pass_rate": n_pass / len(trials),
            "max_residual": max(residual_values, default=0.0),
        },
    }
    return report


def _config_echo(cfg):
    doc = asdict(cfg)
    doc["block"] = list(cfg.block) if cfg.block else None
    # the destination is not part of the computation; keeping it out makes
    # reports byte-identical wherever they are written
    doc.pop("out")
    return doc


def build_parser():
    p = argparse.ArgumentParser(
        prog="amalgam",
        description="check suites for operator-valued R/S transforms",
    )
    p.add_argument("suite", choices=SUITES)
    p.add_argument("--dim", type=int, default=None, help="ambient dimension")
    p.add_argument(
        "--block",
        type=str,
        default=None,
        metavar="KxD",
        help="block subalgebra factorization, e.g. 2x2",
    )
    p.add_argument(
        "--diag", type=int, default=None, help="diagonal subalgebra dimension"
    )
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--order", type=int, default=6, help="truncation order")
    p.add_argument("--ball-fraction", type=float, default=0.5)
    p.add_argument("--negative-control", action="store_true")
    p.add_argument("--out", type=str, default=None, help="report file path")
    return p


def config_from_args(args, parser):
    block = None
    if args.block is not None:
        try:
            k, d = (int(part) for part in args.block.lower().split("x"))
        except ValueError:
            parser.error(f"--block expects KxD, got {args.block!r}")
        if k < 1 or d < 1:
            parser.error("--block factors must be positive")
        block = (k, d)
        if args.diag is not None:
            parser.error("--block and --diag are mutually exclusive")
        ambient = k * d
        if args.dim is not None and args.dim != ambient:
            parser.error(f"--dim {args.dim} conflicts with --block {k}x{d}")
        subalgebra = "block"
        diag = d
    else:
        ambient = args.diag if args.diag is not None else (args.dim or 4)
        if args.dim is not None and args.diag is not None and args.dim != args.diag:
            parser.error("--dim conflicts with --diag")
        subalgebra = "diagonal"
        diag = min(ambient, 4)
    try:
        return RunConfig(
            suite=args.suite,
            ambient_dim=ambient,
            subalgebra=subalgebra,
            block=block,
            diag=diag,
            trials=args.trials,
            seed=args.seed,
            tol=args.tol,
            order=args.order,
            ball_fraction=args.ball_fraction,
            negative_control=args.negative_control,
            out=args.out,
        )
    except ValueError as exc:
        parser.error(str(exc))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = config_from_args(args, parser)
    start = time.perf_counter()
    report = run_suite(cfg)
    elapsed = time.perf_counter() - start
    text = json.dumps(report, indent=2, allow_nan=False, sort_keys=False)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    agg = report["aggregate"]
    print(
        f"suite={cfg.suite} trials={agg['n_trials']} "
        f"pass_rate={agg['pass_rate']:.3f} "
        f"max_residual={agg['max_residual']:.3e} "
        f"wall={elapsed:.2f}s"
        + (f" out={cfg.out}" if cfg.out else "")
    )
    return 0 if agg["pass_rate"] == 1.0 else 1


if __name__ == "__main__":
    sys.exit(main())
