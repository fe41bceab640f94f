"""Command-line entry point.

Every subcommand is a thin composition over the library. Failures print a
single JSON line ``{"error", "message", "file", "row"}`` to stderr, exit
non-zero, and leave no output files behind.
"""

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import embio
from .domainshift import apply_shift, estimate_shift
from .evalkit import group_accuracy, kfold_accuracy, make_pairs, roc, score_pairs, tar_at_far
from .exceptions import EmbkitError, InvalidParameter
from .identitybank import build_bank, filter_top_k, score_identities
from .sampler import SlerpSampler, make_sphere_clusters

EXIT_FAILURE = 2


class CommandFailed(Exception):
    def __init__(self, code, message, file=None, row=None):
        super().__init__(message)
        self.payload = {"error": code, "message": message, "file": file, "row": row}


def guarded(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except EmbkitError as exc:
            raise CommandFailed(exc.code, exc.message, exc.file, exc.row) from exc
        except OSError as exc:
            name = "FileNotFound" if isinstance(exc, FileNotFoundError) else "IOError"
            raise CommandFailed(name, exc.strerror or str(exc), exc.filename) from exc
    return wrapper


def default_threads():
    return os.cpu_count() or 1


def threads_option(f):
    return click.option("--threads", type=click.IntRange(min=1), default=default_threads,
                        show_default="machine parallelism", help="Worker threads.")(f)


def force_option(f):
    return click.option("--force", is_flag=True, help="Overwrite existing outputs.")(f)


def config_option(f):
    return click.option("--config", "config_path", type=click.Path(dir_okay=False),
                        default=None, help="Flat YAML/JSON run config.")(f)


def _tag(exc, file):
    if exc.file is None:
        exc.file = str(file)
    return exc


def load_emb(path):
    return embio.read_emb(path)


def load_labelled(emb_path, labels_path):
    X = load_emb(emb_path)
    manifest = embio.read_labels(labels_path, count=X.shape[0])
    labels, rows = embio.labelled_rows(X, manifest)
    return labels, rows


def load_bank(emb_path, labels_path):
    labels, rows = load_labelled(emb_path, labels_path)
    try:
        return build_bank(zip(labels, rows))
    except EmbkitError as exc:
        raise _tag(exc, emb_path)


def dump_json(obj):
    return (json.dumps(obj, indent=2) + "\n").encode("utf-8")


def roc_csv(curve):
    return embio.csv_bytes(["threshold", "far", "tar"], curve.points)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli():
    """Embedding-space sampling, domain-shift correction and verification metrics."""


@cli.command("estimate-shift")
@click.option("--target", required=True, type=click.Path(dir_okay=False), help="Target-domain EMB1.")
@click.option("--source", required=True, type=click.Path(dir_okay=False), help="Source-domain EMB1.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--strength", type=float, default=None, help="Recorded in the sidecar.")
@config_option
@force_option
@guarded
def estimate_shift_cmd(target, source, out, strength, config_path, force):
    """Mean offset from the source population to the target population."""
    cfg = embio.load_config(config_path, shift_strength=strength)
    with embio.OutputSet(force) as outs:
        outs.check(out, embio.shift_sidecar(out))
        T, S = load_emb(target), load_emb(source)
        try:
            shift = estimate_shift(T, S)
        except EmbkitError as exc:
            raise _tag(exc, target)
        outs.write(out, embio.emb_bytes(shift.delta.reshape(1, -1)))
        meta = {"source_count": shift.source_count, "target_count": shift.target_count,
                "strength": cfg.shift_strength}
        outs.write(embio.shift_sidecar(out), (json.dumps(meta) + "\n").encode())


@cli.command("apply-shift")
@click.option("--in", "in_path", required=True, type=click.Path(dir_okay=False))
@click.option("--delta", required=True, type=click.Path(dir_okay=False))
@click.option("--strength", type=float, default=None,
              help="Overrides the sidecar/config strength.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@config_option
@force_option
@guarded
def apply_shift_cmd(in_path, delta, strength, out, config_path, force):
    """Add the stored offset to every row (no renormalization)."""
    with embio.OutputSet(force) as outs:
        outs.check(out)
        shift, stored = embio.read_shift(delta)
        cfg = embio.load_config(config_path, shift_strength=strength)
        s = cfg.shift_strength if "shift_strength" in cfg.explicit else stored
        X = load_emb(in_path)
        try:
            Y = apply_shift(X, shift, s) if X.shape[0] else X
        except EmbkitError as exc:
            raise _tag(exc, in_path)
        outs.write(out, embio.emb_bytes(Y))


@cli.command("prototype")
@click.option("--in", "in_path", required=True, type=click.Path(dir_okay=False))
@click.option("--labels", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--out-labels", type=click.Path(dir_okay=False), default=None,
              help="Manifest for the prototype rows [default: OUT with .jsonl suffix].")
@force_option
@guarded
def prototype_cmd(in_path, labels, out, out_labels, force):
    """One renormalized mean embedding per identity."""
    out_labels = out_labels or str(Path(out).with_suffix(".jsonl"))
    with embio.OutputSet(force) as outs:
        outs.check(out, out_labels)
        bank = load_bank(in_path, labels)
        P = np.vstack([r.prototype for r in bank])
        rows = [{"label": r.label, "row": i, "sources": r.n_sources} for i, r in enumerate(bank)]
        outs.write(out, embio.emb_bytes(P))
        outs.write(out_labels, embio.jsonl_bytes(rows))


@cli.command("filter-ids")
@click.option("--prototypes", required=True, type=click.Path(dir_okay=False),
              help="EMB1 of prototypes (or raw embeddings, grouped by label).")
@click.option("--labels", required=True, type=click.Path(dir_okay=False))
@click.option("--top-k", type=click.IntRange(min=1), default=None,
              help="Identities to keep [default: config top_k_identities, else all].")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False), default=None,
              help="Also write the full sorted similarity list.")
@click.option("--aggregate", type=click.Choice(["max", "mean"]), default="max", show_default=True)
@config_option
@threads_option
@force_option
@guarded
def filter_ids_cmd(prototypes, labels, top_k, out, report, aggregate, config_path, threads, force):
    """Keep the K identities least similar to any other identity."""
    cfg = embio.load_config(config_path, top_k_identities=top_k)
    with embio.OutputSet(force) as outs:
        outs.check(out, report)
        bank = load_bank(prototypes, labels)
        reports = score_identities(bank, aggregate=aggregate, n_jobs=threads)
        k = cfg.top_k_identities or len(reports)
        keep = filter_top_k(reports, k)
        header = ["label", "score", "nearest_label"]
        outs.write(out, embio.csv_bytes(header, [(r.label, r.score, r.nearest_label) for r in reports[:len(keep)]]))
        if report:
            outs.write(report, embio.csv_bytes(header, [(r.label, r.score, r.nearest_label) for r in reports]))


def read_keep(path):
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if "label" not in (reader.fieldnames or []):
            raise embio.BadManifest("keep file needs a 'label' column", file=path)
        return [row["label"] for row in reader]


@cli.command("sample")
@click.option("--bank", required=True, type=click.Path(dir_okay=False))
@click.option("--labels", required=True, type=click.Path(dir_okay=False))
@config_option
@click.option("--out-plan", required=True, type=click.Path(dir_okay=False))
@click.option("--out-emb", required=True, type=click.Path(dir_okay=False))
@click.option("--keep", type=click.Path(dir_okay=False), default=None,
              help="CSV with a label column restricting which identities are sampled.")
@click.option("--seed", type=int, default=None, help="Overrides global_seed.")
@threads_option
@force_option
@guarded
def sample_cmd(bank, labels, config_path, out_plan, out_emb, keep, seed, threads, force):
    """SLERP variations around each identity prototype."""
    cfg = embio.load_config(config_path, global_seed=seed)
    with embio.OutputSet(force) as outs:
        outs.check(out_plan, out_emb)
        names, rows = load_labelled(bank, labels)
        sampler = SlerpSampler(images_per_id=cfg.images_per_id, alpha=cfg.alpha, beta=cfg.beta,
                               sources_per_id=cfg.sources_per_id, random_state=cfg.global_seed,
                               n_jobs=threads)
        try:
            sampler.fit(rows, names)
        except EmbkitError as exc:
            raise _tag(exc, bank)
        subset = None
        if keep is not None:
            subset = read_keep(keep)
        elif cfg.top_k_identities is not None:
            reports = score_identities(sampler.bank_, n_jobs=threads)
            subset = filter_top_k(reports, cfg.top_k_identities)
        try:
            V, _ = sampler.sample(labels=subset)
        except InvalidParameter as exc:
            raise _tag(exc, keep or bank)
        outs.write(out_emb, embio.emb_bytes(V))
        outs.write(out_plan, embio.jsonl_bytes(sampler.manifest()))


@cli.command("select")
@click.option("--in", "in_path", required=True, type=click.Path(dir_okay=False))
@click.option("--labels", required=True, type=click.Path(dir_okay=False))
@click.option("--keep", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--out-labels", type=click.Path(dir_okay=False), default=None,
              help="[default: OUT with .jsonl suffix]")
@force_option
@guarded
def select_cmd(in_path, labels, keep, out, out_labels, force):
    """Keep only rows whose label is listed in KEEP (filtering after sampling)."""
    out_labels = out_labels or str(Path(out).with_suffix(".jsonl"))
    with embio.OutputSet(force) as outs:
        outs.check(out, out_labels)
        X = load_emb(in_path)
        manifest = embio.read_labels(labels, count=X.shape[0])
        wanted = set(read_keep(keep))
        chosen = [rec for rec in manifest if rec["label"] in wanted]
        Y = X[[rec["row"] for rec in chosen]] if chosen else np.empty((0, X.shape[1]), np.float32)
        new_rows = [{**rec, "row": i} for i, rec in enumerate(chosen)]
        outs.write(out, embio.emb_bytes(Y))
        outs.write(out_labels, embio.jsonl_bytes(new_rows))


def _scores(emb, pairs_path):
    X = load_emb(emb)
    pairs = embio.read_pairs(pairs_path, count=X.shape[0])
    try:
        return score_pairs(X, pairs)
    except EmbkitError as exc:
        raise _tag(exc, emb)


@cli.command("eval-verify")
@click.option("--emb", required=True, type=click.Path(dir_okay=False))
@click.option("--pairs", "pairs_path", required=True, type=click.Path(dir_okay=False))
@click.option("--folds", type=click.IntRange(min=2), default=None, help="[default: config folds]")
@click.option("--report", required=True, type=click.Path(dir_okay=False))
@click.option("--roc", "roc_path", type=click.Path(dir_okay=False), default=None)
@config_option
@force_option
@guarded
def eval_verify_cmd(emb, pairs_path, folds, report, roc_path, config_path, force):
    """K-fold verification accuracy (plus per-group statistics when pairs carry groups)."""
    cfg = embio.load_config(config_path, folds=folds)
    with embio.OutputSet(force) as outs:
        outs.check(report, roc_path)
        scores = _scores(emb, pairs_path)
        try:
            res = kfold_accuracy(scores, cfg.folds)
            doc = {
                "pairs": len(scores),
                "genuine": int(scores.is_genuine.sum()),
                "impostor": int((~scores.is_genuine).sum()),
                "folds": cfg.folds,
                "mean_accuracy": res.mean_accuracy,
                "per_fold": res.per_fold,
                "thresholds": res.thresholds,
            }
            if scores.groups is not None:
                stats = group_accuracy(scores, cfg.folds)
                doc["groups"] = {"per_group": stats.per_group, "mean": stats.mean, "std": stats.std}
            curve = roc(scores) if roc_path else None
        except EmbkitError as exc:
            raise _tag(exc, pairs_path)
        outs.write(report, dump_json(doc))
        if curve is not None:
            outs.write(roc_path, roc_csv(curve))


@cli.command("eval-tar")
@click.option("--emb", required=True, type=click.Path(dir_okay=False))
@click.option("--pairs", "pairs_path", required=True, type=click.Path(dir_okay=False))
@click.option("--far", type=float, default=None, help="[default: config far_target]")
@click.option("--report", required=True, type=click.Path(dir_okay=False))
@click.option("--roc", "roc_path", type=click.Path(dir_okay=False), default=None)
@config_option
@force_option
@guarded
def eval_tar_cmd(emb, pairs_path, far, report, roc_path, config_path, force):
    """TAR at a fixed FAR (exact operating point, no interpolation)."""
    cfg = embio.load_config(config_path, far_target=far)
    with embio.OutputSet(force) as outs:
        outs.check(report, roc_path)
        scores = _scores(emb, pairs_path)
        try:
            curve = roc(scores)
            op = tar_at_far(scores, cfg.far_target, curve=curve)
        except EmbkitError as exc:
            raise _tag(exc, pairs_path)
        doc = {
            "pairs": len(scores),
            "genuine": int(scores.is_genuine.sum()),
            "impostor": int((~scores.is_genuine).sum()),
            "far_target": cfg.far_target,
            "tar": op.tar,
            "threshold": op.threshold if np.isfinite(op.threshold) else None,
            "achieved_far": op.achieved_far,
        }
        outs.write(report, dump_json(doc))
        if roc_path:
            outs.write(roc_path, roc_csv(curve))


@cli.command("synth-clusters")
@click.option("--ids", type=click.IntRange(min=1), required=True)
@click.option("--dim", type=click.IntRange(min=1), required=True)
@click.option("--per-id", type=click.IntRange(min=1), required=True)
@click.option("--concentration", type=float, required=True)
@click.option("--seed", type=click.IntRange(min=0, max=2 ** 64 - 1), default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--out-labels", type=click.Path(dir_okay=False), default=None,
              help="[default: OUT with .jsonl suffix]")
@force_option
@guarded
def synth_clusters_cmd(ids, dim, per_id, concentration, seed, out, out_labels, force):
    """Synthetic unit-sphere identity clusters (stand-in for encoder output)."""
    out_labels = out_labels or str(Path(out).with_suffix(".jsonl"))
    with embio.OutputSet(force) as outs:
        outs.check(out, out_labels)
        X, y = make_sphere_clusters(ids, dim, per_id, concentration, seed)
        outs.write(out, embio.emb_bytes(X))
        outs.write(out_labels, embio.jsonl_bytes({"label": lbl, "row": i} for i, lbl in enumerate(y)))


@cli.command("make-pairs")
@click.option("--labels", required=True, type=click.Path(dir_okay=False))
@click.option("--genuine", type=click.IntRange(min=0), default=3000, show_default=True)
@click.option("--impostor", type=click.IntRange(min=0), default=3000, show_default=True)
@click.option("--folds", type=click.IntRange(min=2), default=10, show_default=True)
@click.option("--seed", type=click.IntRange(min=0, max=2 ** 64 - 1), default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@force_option
@guarded
def make_pairs_cmd(labels, genuine, impostor, folds, seed, out, force):
    """Random genuine/impostor pairs over a label manifest, with fold ids."""
    with embio.OutputSet(force) as outs:
        outs.check(out)
        manifest = embio.read_labels(labels)
        n_rows = max((rec["row"] for rec in manifest), default=-1) + 1
        row_labels = [None] * n_rows
        for rec in manifest:
            row_labels[rec["row"]] = rec["label"]
        if any(lbl is None for lbl in row_labels):
            raise embio.BadManifest("manifest rows must be contiguous from 0", file=labels)
        try:
            pairs = make_pairs(row_labels, genuine, impostor, folds, seed)
        except EmbkitError as exc:
            raise _tag(exc, labels)
        outs.write(out, embio.pairs_bytes(pairs))


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="embkit", standalone_mode=False)
    except CommandFailed as exc:
        click.echo(json.dumps(exc.payload), err=True)
        sys.exit(EXIT_FAILURE)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.Abort:
        click.echo(json.dumps({"error": "Aborted", "message": "aborted", "file": None, "row": None}),
                   err=True)
        sys.exit(EXIT_FAILURE)
    except click.ClickException as exc:
        click.echo(json.dumps({"error": "UsageError", "message": exc.format_message(),
                               "file": None, "row": None}), err=True)
        sys.exit(EXIT_FAILURE)
    sys.exit(0)


__all__ = ["cli", "main"]
