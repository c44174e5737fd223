"""``smident`` command-line interface.

Every subcommand writes JSON (or CSV for ``curve``) to stdout or ``--out``.
Exit status is 0 on success, 1 on a domain error (for example falsified
hypotheses where unfalsified ones are required) and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys

import numpy as np

from .adversarial import demonstrate_unreliability
from .core import (
    Box,
    DataFormatError,
    Dataset,
    NormSpec,
    SmHypotheses,
    load_config,
    load_dataset,
    save_dataset,
)
from .envelope import FalsifiedHypothesesError, band_error, build_envelope
from .falsification import (
    InflationPolicy,
    StreamError,
    StreamState,
    falsification_curve,
    falsify,
    falsify_via_envelope,
    stream_update,
)
from .parametric import (
    ConfidenceBound,
    InfeasibleConstraintError,
    fit_least_squares,
    fit_linf,
    gaussian_delta,
    parse_basis,
    pp_falsify,
)
from .psm import build_psm, psm_error
from .synth import generate, preset


class UsageError(Exception):
    pass


class DomainError(Exception):
    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars/arrays, and infinities as strings."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _read_dataset(path: str) -> Dataset:
    try:
        with open(path, newline="") as fh:
            return load_dataset(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except DataFormatError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _read_points(path: str, n_u: int) -> np.ndarray:
    """Points CSV with header ``u1,...,u<n>`` (a trailing ``y`` column is ignored)."""
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise UsageError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    if header[-1] != "y":
        text = ",".join(header + ["y"]) + "\n" + "\n".join(ln + ",0" for ln in lines[1:])
    try:
        d = load_dataset(io.StringIO(text))
    except DataFormatError as exc:
        raise UsageError(f"{path}: {exc}") from None
    if d.n_u != n_u:
        raise UsageError(f"{path}: points have dimension {d.n_u}, data have {n_u}")
    return d.U


def _hypotheses(args) -> tuple[SmHypotheses, NormSpec]:
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                hyp, norm = load_config(fh)
        except OSError as exc:
            raise UsageError(f"cannot read {args.config}: {exc.strerror}") from None
        except ValueError as exc:
            raise UsageError(f"{args.config}: {exc}") from None
        if args.q is not None or args.grid_resolution is not None:
            try:
                norm = NormSpec(args.q or norm.q, args.grid_resolution or norm.grid_resolution)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        return hyp, norm
    if args.gamma is None or args.epsilon is None:
        raise UsageError("--gamma and --epsilon are required (or --config)")
    try:
        return (
            SmHypotheses(args.gamma, args.epsilon),
            NormSpec(args.q or "inf", args.grid_resolution or 201),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _basis(args, d: Dataset):
    try:
        return parse_basis(args.basis, d.n_u, d.box)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _fit(args, d: Dataset):
    b = _basis(args, d)
    if args.cost == "ls":
        if getattr(args, "gamma", None) is not None:
            raise UsageError("--gamma is only supported with --cost linf")
        return fit_least_squares(d, b)
    try:
        return fit_linf(d, b, gamma=getattr(args, "gamma", None))
    except InfeasibleConstraintError as exc:
        raise DomainError(str(exc)) from None


def cmd_estimate(args):
    d = _read_dataset(args.data)
    hyp, norm = _hypotheses(args)
    try:
        env = build_envelope(d, hyp, force=args.force)
    except FalsifiedHypothesesError as exc:
        raise DomainError(str(exc), {"verdict": exc.verdict.to_dict()}) from None
    pts = _read_points(args.at, d.n_u) if args.at else d.U
    lo, hi = env.bounds(pts)
    try:
        err = band_error(env, norm)
    except ValueError as exc:
        raise DomainError(str(exc)) from None
    return {
        "gamma": hyp.gamma,
        "epsilon": hyp.epsilon,
        "falsified": env.falsified,
        "points": [
            {"u": u, "lower": a, "central": (a + b) / 2, "upper": b}
            for u, a, b in zip(pts.tolist(), lo.tolist(), hi.tolist())
        ],
        **err.to_dict(),
    }


def cmd_falsify(args):
    d = _read_dataset(args.data)
    hyp, _ = _hypotheses(args)
    test = falsify_via_envelope if args.method == "envelope" else falsify
    return test(d, hyp).to_dict()


def cmd_curve(args):
    d = _read_dataset(args.data)
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    if args.eps_min < 0 or args.eps_max < args.eps_min:
        raise UsageError("need 0 <= --eps-min <= --eps-max")
    grid = np.linspace(args.eps_min, args.eps_max, args.steps) if args.steps > 1 else [args.eps_min]
    return falsification_curve(d, grid).to_csv()


def cmd_stream(args):
    d = _read_dataset(args.data)
    feed = _read_dataset(args.feed)
    if feed.n_u != d.n_u:
        raise UsageError("feed and data have different input dimensions")
    try:
        policy = InflationPolicy(args.rho_gamma, args.rho_epsilon, args.margin)
        state = StreamState.start(d, SmHypotheses(args.init_gamma, args.init_epsilon), policy)
        for u, y in zip(feed.U, feed.y):
            state, _ = stream_update(state, (u, y))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    except StreamError as exc:
        raise DomainError(str(exc)) from None
    return {
        "initial": {"gamma": args.init_gamma, "epsilon": args.init_epsilon},
        "events": [e.to_dict() for e in state.events],
        "final": {"gamma": state.hyp.gamma, "epsilon": state.hyp.epsilon},
        "M": state.dataset.M,
        "box": {"lower": state.box.lower, "upper": state.box.upper},
    }


def cmd_fit(args):
    d = _read_dataset(args.data)
    return _fit(args, d).to_dict()


def cmd_pp_falsify(args):
    d = _read_dataset(args.data)
    b = _basis(args, d)
    if args.delta is not None:
        bound = ConfidenceBound(args.delta)
    elif args.sigma is not None and args.alpha is not None:
        try:
            bound = gaussian_delta(args.sigma, args.alpha)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        raise UsageError("give --delta, or --sigma with --alpha")
    verdict = pp_falsify(d, b, bound)
    return {**verdict.to_dict(), "delta": bound.delta, "minimax": bound.delta + verdict.margin}


def cmd_psm(args):
    d = _read_dataset(args.data)
    model = _fit(args, d)
    try:
        hyp = SmHypotheses(args.gamma_delta, args.epsilon_delta)
        norm = NormSpec(args.q or "inf", args.grid_resolution or 201)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        est = build_psm(d, model, hyp, force=args.force)
    except FalsifiedHypothesesError as exc:
        raise DomainError(str(exc), {"verdict": exc.verdict.to_dict()}) from None
    pts = _read_points(args.at, d.n_u) if args.at else d.U
    lo, hi = est.bounds(pts)
    err = est.pointwise_error(pts)
    return {
        "model": model.to_dict(),
        "gamma_delta": hyp.gamma,
        "epsilon_delta": hyp.epsilon,
        "falsified": est.residual_envelope.falsified,
        "points": [
            {"u": u, "lower": a, "central": (a + b) / 2, "upper": b, "pointwise_error": e}
            for u, a, b, e in zip(pts.tolist(), lo.tolist(), hi.tolist(), err.tolist())
        ],
        **psm_error(est, norm).to_dict(),
    }


def cmd_spike_report(args):
    d = _read_dataset(args.data)
    try:
        bs = [float(v) for v in args.b_list.split(",") if v.strip()]
        spike = [float(v) for v in args.spike_at.split(",")] if args.spike_at else None
    except ValueError:
        raise UsageError("--b-list and --spike-at take comma-separated numbers") from None
    if args.estimate == "zero":
        est = lambda P: np.zeros(len(P))  # noqa: E731
    else:
        mean = float(d.y.mean())
        est = lambda P: np.full(len(P), mean)  # noqa: E731
    try:
        report = demonstrate_unreliability(d, est, bs, spike, args.grid_resolution or 201)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.format == "csv":
        cols = ["b", "spike_gap", "L_inf", "L_1", "L_2", "node_error"]
        cols = [c for c in cols if c in report["rows"][0]]
        lines = [",".join(cols)]
        lines += [",".join(repr(float(r[c])) for c in cols) for r in report["rows"]]
        return "\n".join(lines) + "\n"
    return report


def cmd_synth(args):
    try:
        truth = preset(args.truth, args.eps, args.seed)
        if args.noise:
            truth = type(truth)(truth.kind, truth.params, truth.eps_o, truth.seed, args.noise)
        box = Box.parse(args.box)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.m < 1:
        raise UsageError("--m must be >= 1")
    d = generate(truth, args.m, box)
    text = save_dataset(d)
    summary = {
        "truth": args.truth,
        "M": d.M,
        "n_u": d.n_u,
        "gamma_o": truth.gamma_o(box),
        "eps_o": truth.eps_o,
        "seed": truth.seed,
    }
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        summary["out"] = args.out
        return summary
    return text


def _add_hyp(p, required=False):
    p.add_argument("--gamma", type=float, required=required)
    p.add_argument("--epsilon", type=float, required=required)


def _add_norm(p):
    p.add_argument("--q", choices=["1", "2", "inf"], default=None)
    p.add_argument("--grid-resolution", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smident", description="Set Membership identification toolkit."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="envelope bounds and worst-case error")
    p.add_argument("--data", required=True)
    _add_hyp(p)
    p.add_argument("--config", help="JSON with gamma, epsilon, q, grid_resolution")
    _add_norm(p)
    p.add_argument("--at", help="CSV of evaluation points (default: the data inputs)")
    p.add_argument("--force", action="store_true", help="allow falsified hypotheses")
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("falsify", help="test hypotheses against data")
    p.add_argument("--data", required=True)
    _add_hyp(p)
    p.add_argument("--config")
    p.add_argument("--method", choices=["pairwise", "envelope"], default="pairwise")
    p.set_defaults(func=cmd_falsify, q=None, grid_resolution=None)
    p.add_argument("--out")

    p = sub.add_parser("curve", help="falsification curve gamma*(epsilon) as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--eps-min", type=float, default=0.0)
    p.add_argument("--eps-max", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("stream", help="recursive falsification over a data feed")
    p.add_argument("--data", required=True)
    p.add_argument("--init-gamma", type=float, required=True)
    p.add_argument("--init-epsilon", type=float, required=True)
    p.add_argument("--feed", required=True)
    p.add_argument("--rho-gamma", type=float, default=1.1)
    p.add_argument("--rho-epsilon", type=float, default=1.1)
    p.add_argument("--margin", type=float, default=1e-3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("fit", help="parametric least-squares or minimax fit")
    p.add_argument("--data", required=True)
    p.add_argument("--basis", required=True, help="poly:D or rbf:K[:W]")
    p.add_argument("--cost", choices=["linf", "ls"], default="linf")
    p.add_argument("--gamma", type=float, help="gradient-norm bound (linf only)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("pp-falsify", help="reject a parametric family at a noise level")
    p.add_argument("--data", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--delta", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--alpha", type=float, help="confidence level in percent")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pp_falsify)

    p = sub.add_parser("psm", help="parametric Set Membership estimate")
    p.add_argument("--data", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--cost", choices=["linf", "ls"], default="ls")
    p.add_argument("--gamma", type=float, help="gradient-norm bound for the linf fit")
    p.add_argument("--gamma-delta", type=float, required=True)
    p.add_argument("--epsilon-delta", type=float, required=True)
    _add_norm(p)
    p.add_argument("--at")
    p.add_argument("--force", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_psm)

    p = sub.add_parser("lemma1", help="spiked interpolants against an estimate")
    p.add_argument("--data", required=True)
    p.add_argument("--spike-at", help="comma-separated point (default: widest gap)")
    p.add_argument("--b-list", default="10,100,1000,10000,100000,1000000")
    p.add_argument("--estimate", choices=["mean", "zero"], default="mean")
    p.add_argument("--grid-resolution", type=int, default=None)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_spike_report)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--truth", default="sin", help="sin, cubic, linear or radial2d")
    p.add_argument("--box", required=True, help="lo,hi[;lo,hi...]")
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", choices=["uniform", "truncnorm"])
    p.add_argument("--out", help="CSV destination (default: stdout)")
    p.set_defaults(func=cmd_synth)
    return parser


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        result = args.func(args)
    except UsageError as exc:
        parser.print_usage(stderr)
        stderr.write(f"smident {args.command}: error: {exc}\n")
        return 2
    except DomainError as exc:
        payload = {"error": str(exc), **(exc.payload or {})}
        stdout.write(dumps(payload))
        stderr.write(f"smident {args.command}: {exc}\n")
        return 1
    text = result if isinstance(result, str) else dumps(result)
    out = getattr(args, "out", None)
    if out and args.command != "synth":
        with open(out, "w") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
