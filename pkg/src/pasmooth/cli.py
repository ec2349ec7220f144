"""Command-line runner: ``pasmooth --suite NAME [options]``.

Exit status: 0 when every selected check passes, 1 on a violation, 2 on a
configuration error, 3 on a numerical failure.  Reports land in
``OUT/<suite>/`` with fixed file names; each JSON report embeds the config
hash and seed.
"""

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .config import SUITES, load_config, validate_rectangle
from .reports import LemmaReport, config_hash, write_json
from .surface import ConfigError

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _numerical_errors():
    from .conjugacy import ConjugacyError
    from .slowdown import IntegrationError
    from .thermo import PressureError
    from .tower import RectangleError
    return (IntegrationError, PressureError, ConjugacyError, RectangleError,
            FloatingPointError)


class Run:
    """Shared state for one invocation; branch sets are built once and reused."""

    def __init__(self, config):
        self.config = config
        self.params = config.model
        self.seed = int(config.seed)
        self.hash = config_hash(config.to_dict())
        self.results = []
        self._rect = None
        self._branches = None

    @property
    def rect(self):
        if self._rect is None:
            self._rect = validate_rectangle(self.config)
        return self._rect

    @property
    def branches(self):
        if self._branches is None:
            from .tower import enumerate_branches
            n = max(2, int(self.config.samples))
            self._branches = enumerate_branches(self.params, self.rect, n // 2,
                                                int(self.config.nmax), self.seed,
                                                n_random=n - n // 2)
            if len(self._branches) == 0:
                from .tower import RectangleError
                raise RectangleError("no branch returned within nmax steps")
        return self._branches

    def directory(self, suite):
        d = os.path.join(self.config.out, suite)
        os.makedirs(d, exist_ok=True)
        return d

    def emit(self, suite, name, payload, passed):
        """Write one JSON report and record its outcome."""
        if isinstance(payload, LemmaReport):
            payload = payload.to_dict()
        body = {"suite": suite, "check": name, "passed": bool(passed),
                "config_hash": self.hash, "seed": self.seed, "version": __version__,
                "result": payload}
        write_json(os.path.join(self.directory(suite), f"{name}.json"), body)
        self.results.append((suite, name, bool(passed)))
        print(f"[{'PASS' if passed else 'FAIL'}] {suite}/{name}")


# ---------------------------------------------------------------- suites

def suite_local_verify(run):
    from . import lemmas, slowdown
    p, cfg = run.params, run.config
    prof, lam, n, seed = p.profile, p.lam, int(cfg.samples), run.seed
    rng = np.random.default_rng(seed)
    s = rng.uniform(-prof.rt0, prof.rt0, (min(n, 200), 2))
    s = s[np.hypot(s[:, 0], s[:, 1]) > 1e-9]
    defect = slowdown.liouville_defect(prof, p.loglam, s)
    run.emit("local-verify", "liouville", {"max_defect": float(np.max(defect)),
                                           "points": len(s)}, float(np.max(defect)) <= 1e-8)
    reports = [
        lemmas.check_residence_time(prof, lam, n, seed),
        lemmas.check_discrete_residence(p, n, seed),
        lemmas.check_dij_bound(prof),
        lemmas.check_envelopes(prof, lam, n, seed),
        lemmas.check_spread(prof, lam, cfg.spread_alpha, n, seed, pairing="stable"),
        lemmas.check_angle_product(p, n, seed, alpha=cfg.alpha),
    ]
    for rep in reports:
        run.emit("local-verify", rep.lemma, rep, rep.passed)


def suite_cones(run):
    from .cones import check_cone_invariance, cone_report_json
    cfg = run.config
    rep = check_cone_invariance(run.params, cfg.alpha, int(cfg.samples), run.seed)
    ok = rep.passed if run.params.slowdown else rep.violations == 0
    run.emit("cones", "cone_invariance", cone_report_json(rep), ok)


def suite_tower(run):
    from .lemmas import check_cocycle_comparison, check_sum_bounds
    from .tower import (check_intermediate_bound, check_tower_conditions, representatives,
                        slow_branches, tower_stats, write_branch_csv, write_stats_json)
    p, cfg = run.params, run.config
    bs = run.branches
    d = run.directory("tower")
    write_branch_csv(os.path.join(d, "branches.csv"), bs)
    st = tower_stats(bs)
    extra = {"config_hash": run.hash, "seed": run.seed, "n_seeds": bs.n_seeds,
             "none_fraction": bs.none_fraction, "Q": run.rect.Q}
    write_stats_json(os.path.join(d, "tower_stats.json"), st, extra)
    run.emit("tower", "entropy_gap", {"h_fit": st.h_fit, "r2": st.r2, "log_lambda": p.loglam,
                                      "kac_sum": st.kac_sum, "n_keys": st.n_keys},
             st.h_below_log_lambda)
    y = check_tower_conditions(p, run.rect, bs, pairs=int(cfg.pairs), seed=run.seed)
    run.emit("tower", "tower_conditions", y, y.passed)
    k = check_intermediate_bound(p, bs, pairs=int(cfg.pairs), seed=run.seed)
    run.emit("tower", "intermediate_bound", k, k.passed)
    n_cmp = max(1, min(200, int(cfg.pairs)))
    pool = representatives(bs)[:n_cmp] + slow_branches(p, run.rect, n_cmp, run.seed + 3, depth=2)
    c = check_cocycle_comparison(p, pool, seed=run.seed, alpha=cfg.alpha)
    run.emit("tower", "cocycle_comparison", c, c.passed)
    sb = check_sum_bounds(p, pool, seed=run.seed, alpha=cfg.alpha)
    run.emit("tower", "sum_bounds", sb, sb.passed)


def suite_pressure(run):
    from .thermo import (dirac_check, lambda1_and_t0, parse_t_grid, pressure_curve,
                         pressure_root, srb_exponent, write_pressure_csv)
    from .tower import choose_rectangle, enumerate_branches, tower_stats
    p, cfg = run.params, run.config
    bs = run.branches
    grid = parse_t_grid(cfg.t_grid)
    curve = pressure_curve(p, bs, grid)
    d = run.directory("pressure")
    write_pressure_csv(os.path.join(d, "pressure.csv"), curve)
    trunc = float(np.nanmax(curve.truncation_delta))
    shape = {"monotone": curve.monotone, "convex": curve.convex,
             "max_truncation_delta": trunc, **curve.details}
    run.emit("pressure", "curve_shape", shape,
             curve.monotone and curve.convex and trunc <= 1e-3)
    P0 = pressure_root(p, bs, 0.0)
    P1 = pressure_root(p, bs, 1.0)
    ends = {"P0": P0, "P1": P1, "log_lambda": p.loglam}
    run.emit("pressure", "endpoints", ends,
             abs(P0 - p.loglam) <= 0.05 * p.loglam and abs(P1) <= 0.05)

    h_fit = tower_stats(bs).h_fit
    srb = srb_exponent(p, seed=run.seed)
    info = {"h_fit": h_fit, "chi_u": srb.chi_u, "chi_u_stderr": srb.stderr}
    ok = True
    if p.slowdown:
        try:
            loglam1, t0 = lambda1_and_t0(p, bs, h_fit, srb.chi_u)
            info.update({"log_lambda1": loglam1, "t0": t0})
            ok = t0 < 0
        except (ValueError, AssertionError) as exc:
            info["error"] = str(exc)
            ok = False
        # halving r0 should shrink log lambda_1 - h_srb; each model uses its own branches
        half = p.with_changes(r0_ratio=p.r0_ratio / 2)
        n = max(2, int(cfg.samples))
        hb = enumerate_branches(half, choose_rectangle(half), n // 2, int(cfg.nmax), run.seed,
                                n_random=n - n // 2)
        srb2 = srb_exponent(half, seed=run.seed)
        try:
            l2, t2 = lambda1_and_t0(half, hb, tower_stats(hb).h_fit, srb2.chi_u)
            info.update({"chi_u_half_r0": srb2.chi_u, "log_lambda1_half_r0": l2,
                         "t0_half_r0": t2, "gap": info["log_lambda1"] - srb.chi_u,
                         "gap_half_r0": l2 - srb2.chi_u})
            ok = ok and info["gap_half_r0"] < info["gap"]
        except (KeyError, ValueError, AssertionError) as exc:
            info["error_half_r0"] = str(exc)
            ok = False
    run.emit("pressure", "srb_and_t0", info, ok)

    for t in (1.0, 2.0):
        rep = dirac_check(p, t, seed=run.seed)
        run.emit("pressure", f"dirac_t{t:g}", rep, rep.passed)


def suite_conjugacy(run):
    from .conjugacy import ConjugacyApprox, validate
    cfg = run.config
    approx = ConjugacyApprox(tol=cfg.conj_tol)
    out = validate(run.params, approx, n_points=int(cfg.samples), seed=run.seed)
    run.emit("conjugacy", "residual", out, out["passed"])


def suite_stats(run):
    from .conjugacy import ConjugacyApprox, validate
    from .stats import (bump, clt_check, correlations, mme_sampler, sine, volume_sampler,
                        write_correlation_csv, write_summary_json)
    p, cfg = run.params, run.config
    approx = ConjugacyApprox(tol=cfg.conj_tol)
    validate(p, approx, n_points=2000, seed=run.seed, n_visiting=100)
    mu0 = mme_sampler(p, approx)
    mu1 = volume_sampler(p)
    d = run.directory("stats")
    n = int(cfg.clt_samples)
    lags = range(0, 11)
    reps = []
    h = sine()
    corr = correlations(p, mu0, h, h, lags, n, run.seed)
    write_correlation_csv(os.path.join(d, "correlations_mu0_sine.csv"), corr)
    reps.append(corr)
    run.emit("stats", "correlations_mu0", corr.summary(),
             corr.conclusive and corr.kappa < 1.0 and corr.r2 >= 0.9)
    for sampler in (mu0, mu1):
        b = correlations(p, sampler, bump(), bump(), lags, n, run.seed + 1)
        write_correlation_csv(os.path.join(d, f"correlations_{sampler.name}_bump.csv"), b)
        reps.append(b)
    clt = clt_check(p, mu0, h, int(cfg.clt_n), n, run.seed + 2, ks_threshold=cfg.ks_threshold)
    reps.append(clt)
    run.emit("stats", "clt_mu0", clt.summary(), bool(clt.details.get("passed", False)))
    write_summary_json(os.path.join(d, "summary.json"), reps)


SUITE_FUNCS = {"local-verify": suite_local_verify, "cones": suite_cones,
               "tower": suite_tower, "pressure": suite_pressure,
               "conjugacy": suite_conjugacy, "stats": suite_stats}


# ---------------------------------------------------------------- entry

def build_parser():
    ap = argparse.ArgumentParser(prog="pasmooth", description=__doc__.splitlines()[0])
    ap.add_argument("--config", metavar="PATH")
    ap.add_argument("--seed", type=str)
    ap.add_argument("--suite", choices=SUITES)
    ap.add_argument("--out", metavar="DIR")
    ap.add_argument("--t-grid", metavar="a:b:step")
    ap.add_argument("--samples", type=str, metavar="N")
    ap.add_argument("--nmax", type=str, metavar="N")
    ap.add_argument("--disable-slowdown", action="store_true",
                    help="run the linear map f instead of g")
    ap.add_argument("--version", action="version", version=__version__)
    return ap


def _join_negative_values(argv):
    """Let '--t-grid -2:1:0.1' through: argparse would read -2:1:0.1 as an option."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--t-grid":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_join_negative_values(argv))
    overrides = {"seed": args.seed, "suite": args.suite, "out": args.out,
                 "t_grid": args.t_grid, "samples": args.samples, "nmax": args.nmax}
    if args.disable_slowdown:
        overrides["slowdown"] = "false"
    numeric = _numerical_errors()
    try:
        config = load_config(args.config, overrides)
        run = Run(config)
        if config.suite in ("tower", "pressure", "all"):
            run.rect
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    suites = [s for s in SUITE_FUNCS if config.suite in (s, "all")]
    t_start = time.time()
    failed = None
    for name in suites:
        try:
            SUITE_FUNCS[name](run)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except numeric as exc:
            print(f"numerical failure in {name}: {type(exc).__name__}: {exc}", file=sys.stderr)
            failed = name
            break
    bad = [f"{s}/{n}" for s, n, ok in run.results if not ok]
    manifest = {"config": config.to_dict(), "config_hash": run.hash, "seed": run.seed,
                "suites": suites, "results": [{"suite": s, "check": n, "passed": ok}
                                              for s, n, ok in run.results],
                "violations": bad, "numerical_failure": failed,
                "elapsed_s": round(time.time() - t_start, 3)}
    os.makedirs(config.out, exist_ok=True)
    write_json(os.path.join(config.out, "run.json"), manifest)
    if failed is not None:
        return EXIT_NUMERIC
    if bad:
        print("violations: " + ", ".join(bad), file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
