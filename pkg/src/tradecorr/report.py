"""Artifact emission: plot-ready CSV tables plus a manifest per run.

Every table starts with a ``# config_hash=... seed=...`` line. Floats are
written with ``repr`` so a rerun with the same configuration is
byte-identical.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .cluster import ClusterCut, leaf_order, reorder
from .config import RunConfig
from .errors import EmptySampleError, TradecorrError
from .ingest import Reject, Venue, write_rejects
from .persistence import LinkMap, MinorityRow, RestingOrder, Track, format_coef, next_month
from .pipeline import (
    GroupResult,
    load_inputs,
    stage_bootstrap,
    stage_cluster,
    stage_correlate,
    stage_discretize,
    stage_eigen,
    stage_minority,
    stage_persist,
)
from .spectra import mp_bounds, significant_share
from .strategy import write_exclusions, write_strategy_matrix

log = logging.getLogger(__name__)

ARTIFACT_CLASSES = (
    "strategy_matrices",
    "correlation_matrices",
    "eigen_reports",
    "pooled_density",
    "bootstrap_bands",
    "dendrograms",
    "link_maps",
    "regression",
    "minority",
    "cumulative_paths",
)


def _f(x) -> str:
    return repr(float(x))


class Emitter:
    """Writes tables under ``root`` and remembers what it wrote."""

    def __init__(self, root: Path, cfg: RunConfig):
        self.root = Path(root)
        self.cfg = cfg
        self.files: dict[str, list[str]] = {}
        self.stamp = f"config_hash={cfg.config_hash()} seed={cfg.seed}"

    def _open(self, artifact: str, rel: str):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        self.files.setdefault(artifact, []).append(rel)
        return open(path, "w", newline="")

    def table(self, artifact: str, rel: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
        with self._open(artifact, rel) as fh:
            fh.write(f"# {self.stamp}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    def matrix(self, artifact: str, rel: str, codes: Sequence[str], mat: np.ndarray) -> None:
        self.table(artifact, rel, ["institution", *codes],
                   ([c, *(_f(v) for v in row)] for c, row in zip(codes, mat)))


# -- per-artifact writers ------------------------------------------------------

def emit_rejects(em: Emitter, rejects: Sequence[Reject]) -> None:
    path = em.root / "rejects.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# {em.stamp}\n")
        write_rejects(fh, rejects)
    em.files.setdefault("rejects", []).append("rejects.csv")


def emit_strategy(em: Emitter, groups: Sequence[GroupResult]) -> None:
    for g in groups:
        for m, M in sorted(g.matrices.items()):
            with em._open("strategy_matrices", f"strategy/{g.key}_{m}.txt") as fh:
                write_strategy_matrix(fh, M, em.stamp)
            with em._open("strategy_matrices", f"strategy/{g.key}_{m}_excluded.csv") as fh:
                fh.write(f"# {em.stamp}\n")
                write_exclusions(fh, M)


def emit_paths(em: Emitter, groups: Sequence[GroupResult]) -> None:
    for g in groups:
        for m, M in sorted(g.matrices.items()):
            em.table("cumulative_paths", f"paths/{g.key}_{m}.csv", ["institution", *map(str, M.buckets)],
                     ([c, *map(int, row)] for c, row in zip(M.institutions, M.cumulative())))


def emit_correlation(em: Emitter, groups: Sequence[GroupResult], alpha: float) -> None:
    rows = []
    for g in groups:
        for m, c in sorted(g.corrs.items()):
            em.matrix("correlation_matrices", f"correlation/{g.key}_{m}_raw.csv", c.codes, c.rho)
            em.matrix("correlation_matrices", f"correlation/{g.key}_{m}_tailprob.csv", c.codes, c.tail_prob)
            rows.append([g.instrument, g.venue.value, m, c.N, c.n_samples, _f(significant_share(c, alpha)),
                         ";".join(c.excluded_constant_rows)])
    em.table("correlation_matrices", "correlation/significance.csv",
             ["instrument", "venue", "month", "N", "T", "significant_share", "excluded_constant_rows"], rows)


def emit_ordered(em: Emitter, groups: Sequence[GroupResult]) -> None:
    for g in groups:
        for m, d in sorted(g.dendrograms.items()):
            order = leaf_order(d)
            c = g.corrs[m]
            em.matrix("correlation_matrices", f"correlation/{g.key}_{m}_ordered.csv",
                      [c.codes[i] for i in order], reorder(c.rho, order))


def emit_eigen(em: Emitter, groups: Sequence[GroupResult]) -> None:
    ev_rows, summary = [], []
    for g in groups:
        for m, r in sorted(g.reports.items()):
            ev_rows.extend([g.instrument, g.venue.value, m, i + 1, _f(v)] for i, v in enumerate(r.eigenvalues))
            lo, hi = mp_bounds(r.Q, r.sigma)
            summary.append([g.instrument, g.venue.value, m, r.N, _f(r.Q), _f(r.sigma), _f(r.sigma_row_std),
                            _f(hi), int(np.sum(r.eigenvalues > hi))])
    em.table("eigen_reports", "eigen/eigenvalues.csv", ["instrument", "venue", "month", "rank", "eigenvalue"], ev_rows)
    em.table("eigen_reports", "eigen/summary.csv",
             ["instrument", "venue", "month", "N", "Q", "sigma", "sigma_row_std", "lambda_max", "n_above"], summary)


def emit_pooled(em: Emitter, groups: Sequence[GroupResult]) -> None:
    for g in groups:
        p = g.pooled
        centers = p.centers
        em.table("pooled_density", f"eigen/pooled_{g.key}.csv",
                 ["lambda", "empirical_density", "mp_density", "mp_density_row_std"],
                 ([_f(x), _f(e), _f(a), _f(b)] for x, e, a, b in
                  zip(centers, p.density, p.null.density(centers), p.null_row_std.density(centers))))
        em.table("pooled_density", f"eigen/pooled_{g.key}_null.csv",
                 ["mode", "Q", "sigma", "lambda_min", "lambda_max", "n_eigenvalues", "n_above"],
                 [["selected", _f(p.null.Q), _f(p.null.sigma), _f(p.null.lambda_min), _f(p.null.lambda_max),
                   p.eigenvalues.size, p.n_above],
                  ["row_std", _f(p.null_row_std.Q), _f(p.null_row_std.sigma), _f(p.null_row_std.lambda_min),
                   _f(p.null_row_std.lambda_max), p.eigenvalues.size,
                   int(np.sum(p.eigenvalues > p.null_row_std.lambda_max))]])


def emit_bands(em: Emitter, groups: Sequence[GroupResult]) -> None:
    rows = []
    for g in groups:
        for m, b in sorted(g.bands.items()):
            for r in range(b.k):
                rows.append([g.instrument, g.venue.value, m, r + 1, _f(b.empirical[r]), _f(b.median[r]),
                             _f(b.std[r]), int(bool(b.significant[r]))])
    em.table("bootstrap_bands", "bootstrap/bands.csv",
             ["instrument", "venue", "month", "rank", "empirical", "median", "std", "significant"], rows)


def emit_dendrograms(em: Emitter, groups: Sequence[GroupResult]) -> None:
    cut_rows = []
    for g in groups:
        for m, d in sorted(g.dendrograms.items()):
            em.table("dendrograms", f"dendrogram/{g.key}_{m}_merges.csv", ["step", "left", "right", "height", "size"],
                     ([i, mg.left, mg.right, _f(mg.height), mg.size] for i, mg in enumerate(d.merges)))
            position = {leaf: p for p, leaf in enumerate(leaf_order(d))}
            em.table("dendrograms", f"dendrogram/{g.key}_{m}_leaves.csv", ["node", "institution", "display_position"],
                     ([i, code, position[i]] for i, code in enumerate(d.leaves)))
            c = g.cuts[m]
            for k, members in enumerate(c.clusters):
                role = "minority" if k == c.minority_label else "majority" if k == c.majority_label else ""
                cut_rows.extend([g.instrument, g.venue.value, m, code, k, role] for code in members)
    em.table("dendrograms", "dendrogram/cuts.csv", ["instrument", "venue", "month", "institution", "cluster", "role"],
             cut_rows)


def emit_links(em: Emitter, groups: Sequence[GroupResult]) -> None:
    link_rows, conflict_rows, track_rows, boundary_rows = [], [], [], []
    for g in groups:
        for lm in g.linkmaps:
            boundary_rows.append([g.instrument, lm.boundary[0], lm.boundary[1], len(lm.links), len(lm.conflicts)])
            link_rows.extend([g.instrument, lm.boundary[0], lm.boundary[1], a, b, lm.evidence[a]]
                             for a, b in lm.links.items())
            conflict_rows.extend([g.instrument, lm.boundary[0], lm.boundary[1], o.order_id, o.before, o.after]
                                 for o in lm.conflicts)
        track_rows.extend([g.instrument, i, t.months[0], len(t), ";".join(t.codes)] for i, t in enumerate(g.tracks))
    em.table("link_maps", "links/linkmaps.csv", ["instrument", "month", "next_month", "old_code", "new_code", "evidence"],
             link_rows)
    em.table("link_maps", "links/conflicts.csv", ["instrument", "month", "next_month", "order_id", "before", "after"],
             conflict_rows)
    em.table("link_maps", "links/boundaries.csv", ["instrument", "month", "next_month", "n_links", "n_conflicts"],
             boundary_rows)
    em.table("link_maps", "links/tracks.csv", ["instrument", "track", "start_month", "length", "codes"], track_rows)


REGRESSION_HEADER = ["Stock", "Intercept", "Slope", "R2", "alpha", "se_alpha", "p_alpha",
                     "beta", "se_beta", "p_beta", "n_pairs"]


def regression_rows(groups: Sequence[GroupResult]) -> list[list]:
    rows = []
    for g in groups:
        r = g.regression
        if r is None:
            continue
        rows.append([g.instrument, format_coef(r.alpha, r.se_alpha, r.p_alpha), format_coef(r.beta, r.se_beta, r.p_beta),
                     f"{r.r2:.3f}", _f(r.alpha), _f(r.se_alpha), _f(r.p_alpha), _f(r.beta), _f(r.se_beta),
                     _f(r.p_beta), r.n_pairs])
    return rows


def emit_regression(em: Emitter, groups: Sequence[GroupResult]) -> None:
    em.table("regression", "regression/table.csv", REGRESSION_HEADER, regression_rows(groups))


MINORITY_HEADER = ["instrument", "code", "times_in_minority", "out_of_possible", "prob_nonrandom", "track_codes"]


def emit_minority(em: Emitter, groups: Sequence[GroupResult]) -> None:
    rows = []
    for g in groups:
        rows.extend([g.instrument, r.code, r.x, r.K_active, _f(r.prob_nonrandom),
                     ";".join(r.track.codes) if r.track else ""] for r in g.minority)
    em.table("minority", "minority/table.csv", MINORITY_HEADER, rows)


# -- orchestration ---------------------------------------------------------------

def _write_manifest(root: Path, cfg: RunConfig, em: Emitter, completed: list[str], error: str | None,
                    failed_stage: str | None, warnings: list[str]) -> None:
    produced = [a for a in ARTIFACT_CLASSES if a in em.files]
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "complete": error is None and set(produced) == set(ARTIFACT_CLASSES),
        "completed_stages": completed,
        "failed_stage": failed_stage,
        "error": error,
        "warnings": warnings,
        "artifacts": {k: sorted(v) for k, v in sorted(em.files.items())},
        "artifact_classes": produced,
    }
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_pipeline(cfg: RunConfig, stop_after: str | None = None, skip: frozenset = frozenset()) -> int:
    """Run every stage in order, emitting each stage's tables as soon as it finishes.

    Returns the process exit status. On failure the tables already written
    stay in place and the manifest records the failing stage.
    """
    root = Path(cfg.output_dir)
    em = Emitter(root, cfg)
    completed: list[str] = []
    warnings: list[str] = []
    state: dict = {}

    def ingest():
        res = load_inputs(cfg.inputs)
        emit_rejects(em, res.rejects)
        if res.rejects:
            warnings.append(f"{len(res.rejects)} malformed input line(s); see rejects.csv")
        if not res.records:
            raise EmptySampleError("no valid trade records in the input")
        state["records"] = res.records

    def discretize():
        state["groups"] = stage_discretize(state["records"], cfg)
        emit_strategy(em, state["groups"])
        emit_paths(em, state["groups"])

    def correlate():
        stage_correlate(state["groups"], cfg)
        emit_correlation(em, state["groups"], cfg.alpha)

    def eigen():
        stage_eigen(state["groups"], cfg)
        emit_eigen(em, state["groups"])
        emit_pooled(em, state["groups"])

    def bootstrap():
        stage_bootstrap(state["groups"], cfg)
        emit_bands(em, state["groups"])

    def cluster():
        stage_cluster(state["groups"], cfg)
        emit_dendrograms(em, state["groups"])
        emit_ordered(em, state["groups"])

    def persist():
        stage_persist(state["groups"], state["records"], cfg)
        for g in state["groups"]:
            if g.venue is Venue.ON_BOOK and g.regression is None:
                warnings.append(f"{g.key}: fewer than 3 linkable pairs, regression skipped")
            if g.venue is not Venue.ON_BOOK:
                warnings.append(f"{g.key}: persistence tests run on on_book data only")
        emit_links(em, state["groups"])
        emit_regression(em, state["groups"])

    def minority():
        stage_minority(state["groups"], cfg)
        emit_minority(em, state["groups"])

    steps: list[tuple[str, Callable[[], None]]] = [
        ("ingest", ingest), ("discretize", discretize), ("correlate", correlate), ("eigen", eigen),
        ("bootstrap", bootstrap), ("cluster", cluster), ("persist", persist), ("minority", minority),
    ]
    for name, fn in steps:
        if name in skip:
            continue
        log.info("stage %s", name)
        try:
            fn()
        except (TradecorrError, ValueError, OSError) as exc:
            log.error("stage %s failed: %s", name, exc)
            _write_manifest(root, cfg, em, completed, f"{type(exc).__name__}: {exc}", name, warnings)
            return 1
        completed.append(name)
        if name == stop_after:
            break
    _write_manifest(root, cfg, em, completed, None, None, warnings)
    state.clear()
    return 0


# -- reading artifacts back (for scoring) --------------------------------------------

def _read_table(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def load_cuts(root: Path, instrument: str | None = None) -> dict[str, ClusterCut]:
    by_month: dict[str, dict[int, list[str]]] = {}
    roles: dict[str, dict[int, str]] = {}
    for row in _read_table(Path(root) / "dendrogram" / "cuts.csv"):
        if instrument and row["instrument"] != instrument:
            continue
        k = int(row["cluster"])
        by_month.setdefault(row["month"], {}).setdefault(k, []).append(row["institution"])
        roles.setdefault(row["month"], {})[k] = row["role"]
    out = {}
    for m, cl in by_month.items():
        r = roles[m]
        maj = next((k for k, v in r.items() if v == "majority"), None)
        mino = next((k for k, v in r.items() if v == "minority"), None)
        out[m] = ClusterCut(None, tuple(tuple(cl[k]) for k in sorted(cl)), maj, mino)
    return out


def load_linkmaps(root: Path, instrument: str | None = None) -> list[LinkMap]:
    links: dict[tuple[str, str], dict[str, str]] = {}
    evidence: dict[tuple[str, str], dict[str, int]] = {}
    for row in _read_table(Path(root) / "links" / "boundaries.csv"):
        if instrument and row["instrument"] != instrument:
            continue
        b = (row["month"], row["next_month"])
        links[b], evidence[b] = {}, {}
    for row in _read_table(Path(root) / "links" / "linkmaps.csv"):
        if instrument and row["instrument"] != instrument:
            continue
        b = (row["month"], row["next_month"])
        links.setdefault(b, {})[row["old_code"]] = row["new_code"]
        evidence.setdefault(b, {})[row["old_code"]] = int(row["evidence"])
    conflicts: dict[tuple[str, str], list[RestingOrder]] = {}
    for row in _read_table(Path(root) / "links" / "conflicts.csv"):
        if instrument and row["instrument"] != instrument:
            continue
        b = (row["month"], row["next_month"])
        conflicts.setdefault(b, []).append(RestingOrder(row["order_id"], row["before"], row["after"], b))
    return [LinkMap(b, links[b], evidence[b], tuple(conflicts.get(b, ()))) for b in sorted(links)]


def load_tracks(root: Path, instrument: str | None = None) -> list[Track]:
    tracks = []
    for row in _read_table(Path(root) / "links" / "tracks.csv"):
        if instrument and row["instrument"] != instrument:
            continue
        codes = tuple(row["codes"].split(";"))
        months = [row["start_month"]]
        for _ in codes[1:]:
            months.append(next_month(months[-1]))
        tracks.append(Track(int(row["track"]), codes, tuple(months)))
    return tracks


def load_minority(root: Path, tracks: Sequence[Track] = (), instrument: str | None = None) -> list[MinorityRow]:
    by_codes = {t.codes: t for t in tracks}
    rows = []
    for row in _read_table(Path(root) / "minority" / "table.csv"):
        if instrument and row["instrument"] != instrument:
            continue
        tr = by_codes.get(tuple(row["track_codes"].split(";"))) if row["track_codes"] else None
        rows.append(MinorityRow(row["code"], int(row["times_in_minority"]), int(row["out_of_possible"]), (),
                                float(row["prob_nonrandom"]), tr))
    return rows
