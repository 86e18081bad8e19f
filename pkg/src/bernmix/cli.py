"""Command-line entry point.

Every subcommand that writes files also writes ``<first output>.manifest.json``
recording the normalized argument list; ``bernmix rerun MANIFEST`` replays it
and reproduces the outputs byte for byte.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .analysis import ClusterFlow, sankey_flows
from .core import MixtureParams
from .dataset import complete_rows, read_csv, to_csv
from .em import FitConfig, FitResult, fit, predict
from .errors import BernmixError
from .report import FigureSpec, companion_json, render
from .simulate import increasing_missing_profile, sample_dataset
from .stats import format_table, prevalence_table

PATH_FLAGS = {"--input", "--out", "--model", "--fit-a", "--fit-b", "--in", "--data", "--truth"}


class _Outputs:
    """Stage files in temporaries and publish them together, or not at all."""

    def __init__(self):
        self.staged: list[tuple[str, Path]] = []

    def write(self, path: Path, text: str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        self.staged.append((tmp, path))

    def commit(self) -> None:
        done = []
        try:
            for tmp, path in self.staged:
                os.replace(tmp, path)
                done.append(path)
        except OSError:
            for path in done:
                path.unlink(missing_ok=True)
            raise
        finally:
            self.discard()

    def discard(self) -> None:
        for tmp, _ in self.staged:
            Path(tmp).unlink(missing_ok=True)
        self.staged = []

    @property
    def paths(self) -> list[Path]:
        return [p for _, p in self.staged]


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _row(text: str) -> list[float | None]:
    out = []
    for t in text.split(","):
        t = t.strip()
        if t in ("0", "1"):
            out.append(float(t))
        elif t.lower() in ("nan", ""):
            out.append(None)
        else:
            raise BernmixError(f"row entries must be 0, 1, NaN or empty, got {t!r}")
    return out


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1) + "\n"


def normalize_argv(argv: list[str], base: Path | None = None) -> list[str]:
    """Rewrite path arguments as absolute paths so a manifest replays anywhere."""
    base = Path.cwd() if base is None else base
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        flag, eq, val = tok.partition("=")
        if flag in PATH_FLAGS and eq:
            out.append(f"{flag}={(base / val).resolve()}")
        elif tok in PATH_FLAGS and i + 1 < len(argv):
            out += [tok, str((base / argv[i + 1]).resolve())]
            i += 1
        else:
            out.append(tok)
        i += 1
    return out


def _manifest(args, argv, outputs: _Outputs, config: dict) -> None:
    if not outputs.paths:
        return
    first = outputs.paths[0]
    inputs = [str(Path(getattr(args, d)).resolve()) for d in ("input", "model", "fit_a", "fit_b", "in_path", "data")
              if getattr(args, d, None)]
    manifest = {
        "tool": "bernmix",
        "version": __version__,
        "subcommand": args.command,
        "argv": argv,
        "inputs": inputs,
        "config": config,
        "outputs": [str(p.resolve()) for p in outputs.paths],
    }
    outputs.write(first.with_name(first.name + ".manifest.json"), _dumps(manifest))


def cmd_fit(args, out: _Outputs) -> dict:
    ds = read_csv(args.input)
    if args.complete_only:
        ds = complete_rows(ds)
    config = FitConfig(k=args.k, seed=args.seed, restarts=args.restarts, tol=args.tol,
                       max_iter=args.max_iter,
                       map_smoothing=tuple(args.map) if args.map else None,
                       dirichlet_alpha=args.dirichlet_alpha)
    result = fit(ds, config)
    payload = result.to_dict()
    payload["rows_used"] = "complete-only" if args.complete_only else "include-missing"
    out.write(Path(args.out), _dumps(payload))
    print(f"K={config.k} log-likelihood={result.log_likelihood:.6f} iterations={result.iterations} "
          f"converged={result.converged} N={ds.n}")
    return {**config.to_dict(), "rows_used": payload["rows_used"]}


def cmd_predict(args, out: _Outputs) -> dict:
    model = json.loads(Path(args.model).read_text())
    params = MixtureParams.from_dict(model["params"] if "params" in model else model)
    probs, hard = predict(params, _row(args.row))
    payload = {"row": [None if v is None else int(v) for v in _row(args.row)],
               "probabilities": probs.tolist(), "cluster": hard}
    text = _dumps(payload)
    sys.stdout.write(text)
    if args.out:
        out.write(Path(args.out), text)
    return {"row": args.row}


def cmd_prevalence(args, out: _Outputs) -> dict:
    ds = read_csv(args.input)
    if args.complete_only:
        ds = complete_rows(ds)
    rows = prevalence_table(ds, args.confidence, df=args.df_override, n=args.n_override)
    print(format_table(rows))
    if args.out:
        out.write(Path(args.out), _dumps({"confidence": args.confidence,
                                           "rows": [r.to_dict() for r in rows]}))
    return {"confidence": args.confidence, "df_override": args.df_override,
            "n_override": args.n_override, "complete_only": args.complete_only}


def cmd_compare(args, out: _Outputs) -> dict:
    fit_a = FitResult.from_json(Path(args.fit_a).read_text())
    fit_b = FitResult.from_json(Path(args.fit_b).read_text())
    flow = sankey_flows(fit_a, fit_b)
    out.write(Path(args.out), _dumps(flow.to_dict()))
    print(f"shared patients={flow.shared_ids.size} swings={len(flow.swings)}")
    for pattern, count in flow.swing_types():
        print(f"  {count} x {['NaN' if v is None else v for v in pattern]}")
    return {}


def cmd_simulate(args, out: _Outputs) -> dict:
    alpha = _floats(args.alpha) if args.alpha else None
    if alpha is not None and len(alpha) == 1:
        alpha = alpha * args.k
    if args.missing_rates is not None:
        rates = _floats(args.missing_rates)
        if len(rates) == 1:
            rates = rates * args.m
    else:
        rates = increasing_missing_profile(args.m, args.incomplete_fraction).tolist()
    sample = sample_dataset(args.k, args.m, args.n, alpha=alpha, seed=args.seed, missing_rates=rates)
    csv_path = Path(args.out)
    out.write(csv_path, to_csv(sample.data))
    truth = Path(args.truth) if args.truth else csv_path.with_suffix(".truth.json")
    out.write(truth, _dumps(sample.truth_dict()))
    return {"k": args.k, "m": args.m, "n": args.n, "alpha": sample.alpha.tolist(), "seed": args.seed,
            "missing_rates": sample.missing_rates.tolist()}


def cmd_report(args, out: _Outputs) -> dict:
    obj = json.loads(Path(args.in_path).read_text())
    if args.kind == "hinton":
        fitted = FitResult.from_dict(obj)
        labels = [f"Cluster {j + 1}" for j in range(fitted.params.k)]
        if args.field == "pi":
            spec = FigureSpec("hinton", fitted.params.pi[None, :], options={"col_labels": labels})
        else:
            spec = FigureSpec("hinton", fitted.params.lam, options={
                "row_labels": labels, "col_labels": list(fitted.data.column_labels)})
    elif args.kind == "heatmap":
        fitted = FitResult.from_dict(obj)
        if args.data:
            full = read_csv(args.data)
            where = {int(p): i for i, p in enumerate(full.patient_ids)}
            ds = full.take([where[int(p)] for p in fitted.patient_ids])
        else:
            ds = fitted.data
        spec = FigureSpec("heatmap", (ds, fitted))
    else:
        spec = FigureSpec("sankey", ClusterFlow.from_dict(obj))
    svg_path = Path(args.out)
    out.write(svg_path, render(spec))
    out.write(svg_path.with_suffix(".json"), companion_json(spec) + "\n")
    return {"kind": args.kind, "field": args.field}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bernmix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bernmix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a Bernoulli mixture by EM")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=500)
    rows = p.add_mutually_exclusive_group()
    rows.add_argument("--complete-only", action="store_true")
    rows.add_argument("--include-missing", dest="complete_only", action="store_false")
    p.add_argument("--map", nargs=2, type=float, metavar=("A", "B"),
                   help="Beta(A, B) smoothing prior on every lambda")
    p.add_argument("--dirichlet-alpha", type=float, default=None)
    p.add_argument("--out", default="fit.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="cluster probabilities for one answer row")
    p.add_argument("--model", required=True)
    p.add_argument("--row", required=True, help="comma-separated 0/1/NaN")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("prevalence", help="per-column prevalence with t intervals")
    p.add_argument("--input", required=True)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--df-override", type=float, default=None)
    p.add_argument("--n-override", type=float, default=None)
    p.add_argument("--complete-only", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_prevalence)

    p = sub.add_parser("compare", help="patient flow between two fits")
    p.add_argument("--fit-a", required=True)
    p.add_argument("--fit-b", required=True)
    p.add_argument("--out", default="flow.json")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="sample a synthetic cohort")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", help="Dirichlet concentration, scalar or comma list")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--missing-rates", help="per-column rates, scalar or comma list")
    p.add_argument("--incomplete-fraction", type=float, default=537 / 1184,
                   help="target incomplete-row fraction for the default increasing profile")
    p.add_argument("--out", default="synthetic.csv")
    p.add_argument("--truth", help="ground-truth JSON path (default: <out>.truth.json)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="render an SVG figure")
    p.add_argument("--kind", choices=("hinton", "heatmap", "sankey"), required=True)
    p.add_argument("--in", dest="in_path", required=True, help="fit.json or flow.json")
    p.add_argument("--data", help="cohort CSV for heat maps (default: rows stored in the fit)")
    p.add_argument("--field", choices=("lambda", "pi"), default="lambda")
    p.add_argument("--out", default="figure.svg")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("rerun", help="replay a run from its manifest")
    p.add_argument("manifest")
    p.set_defaults(func=None)
    return parser


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "rerun":
        try:
            manifest = json.loads(Path(args.manifest).read_text())
            replay = manifest["argv"]
        except (OSError, ValueError, KeyError) as exc:
            print(f"bernmix: error: cannot read manifest: {exc}", file=sys.stderr)
            return 1
        if replay and replay[0] == "rerun":
            print("bernmix: error: manifest replays itself", file=sys.stderr)
            return 1
        return run(replay)

    normalized = normalize_argv(argv)
    outputs = _Outputs()
    try:
        config = args.func(args, outputs)
        _manifest(args, normalized, outputs, config)
        outputs.commit()
    except (BernmixError, OSError, ValueError, KeyError) as exc:
        outputs.discard()
        print(f"bernmix: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
