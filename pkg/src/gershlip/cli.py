"""Command-line interface: init / verify / train / eval / constants.

Exit codes: 0 success, 1 I/O or validation failure, 2 usage error,
3 verification failure, 4 training divergence.  All commands are
deterministic given --seed (default 42).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .activations import default_catalog, get_activation
from .lmi import (
    assemble_lmi,
    discs_to_csv,
    eigenvalues_symmetric,
    eigenvalues_to_csv,
    gershgorin_discs,
    verify_block,
)
from .network import (
    ModelFormatError,
    empirical_lipschitz,
    load_model,
    make_model,
    materialize_model,
    model_forward,
    save_model,
)
from .param import BlockShape, MaterializedBlock
from .training import (
    TrainConfig,
    TrainingDiverged,
    make_sine_dataset,
    output_curve,
    train,
    write_curve_csv,
    write_history_csv,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_VERIFY_FAILED = 3
EXIT_DIVERGED = 4

DEFAULT_SEED = 42


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gershlip",
        description="Certified L-Lipschitz residual blocks via Gershgorin disc bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="print the activation constant catalog")
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")

    p = sub.add_parser("init", help="create a random model from a config file")
    p.add_argument("--config", required=True, help="JSON config with shape/lipschitz/activations")
    p.add_argument("--out", required=True, help="output model path")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p = sub.add_parser("verify", help="certify a model and emit a report")
    p.add_argument("--model", help="model file to verify")
    p.add_argument("--raw-materialized", dest="raw_materialized",
                   help="verify a materialized parameter dump instead of a model "
                        "(testing hook; skips the constrained reparameterization)")
    p.add_argument("--report", required=True, help="output report JSON")
    p.add_argument("--discs", help="optional Gershgorin disc CSV")
    p.add_argument("--eigs", help="optional eigenvalue CSV")
    p.add_argument("--dump-materialized", dest="dump_materialized",
                   help="optionally dump the materialized parameters as JSON")
    p.add_argument("--pairs", type=int, default=1000,
                   help="input pairs for the empirical Lipschitz estimate (0 disables)")
    p.add_argument("--figures", help="directory for rendered figures")
    p.add_argument("--fig-format", default="png", choices=("png", "svg"))
    p.add_argument("--clip-quantile", type=float, default=None,
                   help="truncate the eigenvalue histogram display to this multiple "
                        "of the interquartile range (CSV always holds raw values)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p = sub.add_parser("train", help="run the sine-fit experiment")
    p.add_argument("--model", required=True)
    p.add_argument("--train", dest="train_config", required=True, help="training config JSON")
    p.add_argument("--out", required=True, help="trained model output path")
    p.add_argument("--history", required=True, help="per-epoch loss CSV")
    p.add_argument("--curve", required=True, help="output-curve CSV over a uniform grid")
    p.add_argument("--figures", help="directory for rendered figures")
    p.add_argument("--fig-format", default="png", choices=("png", "svg"))

    p = sub.add_parser("eval", help="run the model on CSV input vectors")
    p.add_argument("--model", required=True)
    p.add_argument("--inputs", required=True, help="CSV, one input vector per line")
    p.add_argument("--out", required=True, help="CSV, one output vector per line")

    return parser


# --- constants ---------------------------------------------------------------

def _cmd_constants(args) -> int:
    catalog = default_catalog()
    if args.json:
        doc = [{"name": s.name, "L": s.L, "m": s.m, "S": s.S, "P": s.P, "params": s.params}
               for s in catalog]
        print(json.dumps(doc, indent=2))
        return EXIT_OK
    header = f"{'activation':<14}{'L':>14}{'m':>14}{'S':>14}{'P':>14}  params"
    print(header)
    print("-" * len(header))
    for s in catalog:
        params = ", ".join(f"{k}={v:g}" for k, v in s.params.items())
        print(f"{s.name:<14}{s.L:>14.9g}{s.m:>14.9g}{s.S:>14.9g}{s.P:>14.9g}  {params}")
    return EXIT_OK


# --- init --------------------------------------------------------------------

def _load_json(path):
    with open(path) as fh:
        doc = json.load(fh)
    if isinstance(doc, dict) and doc.get("version", 1) != 1:
        raise ValueError(f"{path}: unsupported config version {doc['version']!r}")
    return doc


def _check_writable(*paths) -> None:
    """Validate output locations before doing any work."""
    for path in paths:
        if path is None:
            continue
        parent = os.path.dirname(str(path)) or "."
        if not os.path.isdir(parent):
            raise ValueError(f"output directory does not exist: {parent!r}")


def _parse_activation_entry(entry):
    if isinstance(entry, str):
        return get_activation(entry)
    if isinstance(entry, dict) and "name" in entry:
        return get_activation(entry["name"], entry.get("params") or None)
    raise ValueError(f"invalid activation entry {entry!r}")


def _cmd_init(args) -> int:
    cfg = _load_json(args.config)
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    for key in ("d_x", "dims", "lipschitz", "activations"):
        if key not in cfg:
            raise ValueError(f"config is missing {key!r}")
    _check_writable(args.out)
    activations = [_parse_activation_entry(e) for e in cfg["activations"]]
    model = make_model(
        d_x=int(cfg["d_x"]),
        dims=[int(d) for d in cfg["dims"]],
        activations=activations,
        lipschitz_total=float(cfg["lipschitz"]),
        n_blocks=int(cfg.get("blocks", 1)),
        seed=args.seed,
    )
    save_model(model, args.out)
    print(f"wrote model with {len(model.blocks)} block(s) to {args.out}")
    return EXIT_OK


# --- verify ------------------------------------------------------------------

def _materialized_to_dict(block: MaterializedBlock) -> dict:
    blk = block.to_numpy()
    return {
        "d_x": blk.shape.d_x,
        "dims": list(blk.shape.dims),
        "lipschitz": blk.lipschitz,
        "activations": [{"name": s.name, "params": s.params} for s in blk.activations],
        "A": blk.A.tolist(),
        "B": blk.B.tolist(),
        "C": [c.tolist() for c in blk.C],
        "Lambda": [lam.tolist() for lam in blk.Lambda],
        "biases": [b.tolist() for b in blk.biases],
    }


def _materialized_from_dict(bd: dict) -> MaterializedBlock:
    shape = BlockShape(d_x=int(bd["d_x"]), dims=tuple(int(d) for d in bd["dims"]))
    specs = [get_activation(a["name"], a.get("params") or None) for a in bd["activations"]]
    return MaterializedBlock(
        shape=shape,
        lipschitz=float(bd["lipschitz"]),
        activations=specs,
        A=np.asarray(bd["A"], dtype=float),
        B=np.asarray(bd["B"], dtype=float),
        C=[np.asarray(c, dtype=float) for c in bd["C"]],
        Lambda=[np.asarray(lam, dtype=float) for lam in bd["Lambda"]],
        biases=[np.asarray(b, dtype=float) for b in bd["biases"]],
    )


def _cmd_verify(args) -> int:
    if bool(args.model) == bool(args.raw_materialized):
        raise ValueError("pass exactly one of --model or --raw-materialized")
    _check_writable(args.report, args.discs, args.eigs, args.dump_materialized)

    if args.model:
        model = load_model(args.model)
        blocks = materialize_model(model)
        lip_total = model.lipschitz_total
    else:
        doc = _load_json(args.raw_materialized)
        if not (isinstance(doc, dict) and doc.get("version") == 1):
            raise ValueError("materialized dump must be a version-1 JSON object")
        blocks = [_materialized_from_dict(bd) for bd in doc["blocks"]]
        lip_total = float(doc.get("lipschitz_total",
                                  float(np.prod([b.lipschitz for b in blocks]))))

    if args.dump_materialized:
        dump = {"version": 1, "lipschitz_total": lip_total,
                "blocks": [_materialized_to_dict(b) for b in blocks]}
        with open(args.dump_materialized, "w") as fh:
            json.dump(dump, fh, indent=2, sort_keys=True)
            fh.write("\n")

    reports = [verify_block(b) for b in blocks]
    multi = len(blocks) > 1
    all_eigs, all_discs = [], []
    for block in blocks:
        lmi = assemble_lmi(block)
        all_discs.append(gershgorin_discs(lmi))
        all_eigs.append(eigenvalues_symmetric(lmi.M))

    emp = None
    if args.pairs > 0:
        emp = empirical_lipschitz(blocks, n_pairs=args.pairs, seed=args.seed)

    report_doc = {
        "version": 1,
        "lipschitz_total": lip_total,
        "all_pass": all(r.all_pass for r in reports),
        "empirical_lipschitz": emp,
        "blocks": [r.to_dict() for r in reports],
    }
    with open(args.report, "w") as fh:
        json.dump(report_doc, fh, indent=2)
        fh.write("\n")

    if args.discs:
        _write_multi(args.discs, all_discs, discs_to_csv, multi)
    if args.eigs:
        _write_multi(args.eigs, all_eigs, eigenvalues_to_csv, multi)
    if args.figures:
        _render_verify_figures(args, all_discs, all_eigs)

    for bi, r in enumerate(reports):
        status = "PASS" if r.all_pass else "FAIL"
        print(f"block {bi}: {status}  max_disc_upper={r.max_disc_upper:.3e} "
              f"max_eig={r.max_eig:.3e}")
    if emp is not None:
        print(f"empirical lipschitz: {emp:.6g} (certified bound {lip_total:g})")
    return EXIT_OK if report_doc["all_pass"] else EXIT_VERIFY_FAILED


def _write_multi(path, per_block, writer, multi: bool) -> None:
    """Single-block models keep the plain (row, center, radius) / (index,
    eigenvalue) schema; stacks get a leading block column."""
    if not multi:
        writer(per_block[0], path)
        return
    import csv as _csv

    with open(path, "w", newline="") as fh:
        out = _csv.writer(fh)
        if hasattr(per_block[0][0], "center"):
            out.writerow(["block", "row", "center", "radius"])
            for bi, discs in enumerate(per_block):
                for d in discs:
                    out.writerow([bi, d.row, repr(d.center), repr(d.radius)])
        else:
            out.writerow(["block", "index", "eigenvalue"])
            for bi, eigs in enumerate(per_block):
                for i, e in enumerate(eigs):
                    out.writerow([bi, i, repr(float(e))])


def _render_verify_figures(args, all_discs, all_eigs) -> None:
    from . import plots

    os.makedirs(args.figures, exist_ok=True)
    ext = args.fig_format
    flat_discs = [d for discs in all_discs for d in discs]
    plots.save_disc_figure(flat_discs, os.path.join(args.figures, f"gershgorin_discs.{ext}"))
    flat_eigs = np.concatenate(all_eigs)
    plots.save_eigenvalue_histogram(flat_eigs,
                                    os.path.join(args.figures, f"eigenvalues.{ext}"),
                                    clip_quantile=args.clip_quantile)


# --- train -------------------------------------------------------------------

def _cmd_train(args) -> int:
    _check_writable(args.out, args.history, args.curve)
    model = load_model(args.model)
    cfg = _load_json(args.train_config)
    if not isinstance(cfg, dict):
        raise ValueError("training config must be a JSON object")
    ds_cfg = cfg.get("dataset", {})
    domain = tuple(ds_cfg.get("domain", (-2 * math.pi, 2 * math.pi)))
    dataset = make_sine_dataset(
        n=int(ds_cfg.get("n", 1024)),
        domain=(float(domain[0]), float(domain[1])),
        amplitude=float(ds_cfg.get("amplitude", 0.5)),
        seed=int(ds_cfg.get("seed", cfg.get("seed", DEFAULT_SEED))),
    )
    tconf = TrainConfig(
        optimizer=str(cfg.get("optimizer", "adam")),
        lr=float(cfg.get("lr", 1e-2)),
        epochs=int(cfg.get("epochs", 2000)),
        batch_size=int(cfg.get("batch", 0)),
        seed=int(cfg.get("seed", DEFAULT_SEED)),
        verify_every=int(cfg.get("verify_every", 0)),
    )

    try:
        history = train(model, dataset, tconf)
    except TrainingDiverged as exc:
        write_history_csv(exc.history, args.history)
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    save_model(model, args.out)
    write_history_csv(history, args.history)
    blocks = materialize_model(model)
    xs, y_pred, y_target = output_curve(blocks, dataset.domain, dataset.amplitude)
    write_curve_csv(xs, y_pred, y_target, args.curve)

    if args.figures:
        from . import plots

        os.makedirs(args.figures, exist_ok=True)
        ext = args.fig_format
        plots.save_loss_curve(history.losses, os.path.join(args.figures, f"loss_curve.{ext}"))
        plots.save_output_curve(xs, y_pred, y_target,
                                os.path.join(args.figures, f"output_curve.{ext}"))

    c = history.collapse
    print(f"final mse: {history.final_mse:.6g}")
    print(f"line fit: slope={c.slope:.6g} intercept={c.intercept:.6g} "
          f"R2={c.r_squared:.6f} max_residual={c.max_residual:.3g}")
    return EXIT_OK


# --- eval --------------------------------------------------------------------

def _read_vectors(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}:{ln}: {exc}") from exc
    if not rows:
        return np.zeros((0, 0))
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged CSV (rows of different lengths)")
    return np.asarray(rows, dtype=float)


def _cmd_eval(args) -> int:
    _check_writable(args.out)
    model = load_model(args.model)
    X = _read_vectors(args.inputs)
    if X.size and X.shape[1] != model.d_x:
        raise ValueError(f"inputs have width {X.shape[1]}, model expects {model.d_x}")
    blocks = materialize_model(model)
    with open(args.out, "w") as fh:
        for row in X:
            y = model_forward(blocks, row)
            fh.write(",".join(repr(float(v)) for v in y) + "\n")
    return EXIT_OK


# --- entry point ---------------------------------------------------------------

_COMMANDS = {
    "constants": _cmd_constants,
    "init": _cmd_init,
    "verify": _cmd_verify,
    "train": _cmd_train,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except TrainingDiverged as exc:  # train re-raises only if unhandled
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ModelFormatError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def entrypoint() -> None:
    sys.exit(main())
