"""Round-robin tournament engine: batches, budgets, crash semantics, scoring.

A round pits every attack against every defense over a dataset split in
batches.  Each batch draws its own perturbation budget epsilon from
{4, 8, 12, 16}/255.  Every image an attack emits is projected into the
epsilon ball of its clean original by the infrastructure, whatever the
submission produced.  Defenses label the surviving images; a defense that
misses an image gets a null label, which matches no class.

Scoring follows the round-robin rules:
  * D = defenses that labeled every image they were given,
    A = attacks that produced every image.
  * non-targeted attack: over d in D, count labels != true label
  * targeted attack:     over d in D, count labels == target label
  * defense:             over a in A, count labels == true label
  * an attack's missing image scores as if the defender returned the
    true label, so the attacker earns nothing from it
  * normalized = raw / (|opposing set| * N); worst case is the minimum
    per-opponent rate.

Budgets: subprocess submissions get a hard wall-clock kill; in-process
submissions are checked cooperatively between images (documented
difference - in-process preemption is not portable).  Per-cell seeds are
derived from (round seed, submission ids, batch index), so results do not
depend on scheduling order.
"""

from __future__ import annotations

import csv
import os
import statistics
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import data
from .attacks import project_linf
from .rng import Rng, derive_seed

EPSILON_LEVELS_255 = (4, 8, 12, 16)

ATTACK_KINDS = ("nontargeted_attack", "targeted_attack")
SUBMISSION_KINDS = ATTACK_KINDS + ("defense",)

OUTCOMES_HEADER = ("record", "a", "b", "c", "value")
SCOREBOARD_HEADER = ("id", "kind", "raw", "normalized", "worst_case",
                     "median_batch_seconds")


class UnscoreableRoundError(RuntimeError):
    """Raised when an eligibility set is empty; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


# ---------------------------------------------------------------------------
# Submissions

@dataclass(frozen=True)
class InProcessAttack:
    """fn(pixels, epsilon, target_label, rng) -> adversarial pixels."""
    fn: object


@dataclass(frozen=True)
class InProcessDefense:
    """fn(pixels, rng) -> integer label."""
    fn: object


@dataclass(frozen=True)
class SubprocessRunner:
    """Command prefix; the arena appends the protocol flags."""
    command: tuple

    def __post_init__(self):
        if not self.command:
            raise ValueError("subprocess command must not be empty")


@dataclass(frozen=True)
class Submission:
    id: str
    kind: str
    runner: object

    def __post_init__(self):
        if self.kind not in SUBMISSION_KINDS:
            raise ValueError(f"kind must be one of {SUBMISSION_KINDS}, got {self.kind!r}")
        if not self.id or any(ch in self.id for ch in ",|\n"):
            raise ValueError(f"submission id {self.id!r} is empty or holds , | or newline")


# ---------------------------------------------------------------------------
# Round planning

@dataclass(frozen=True)
class BatchPlan:
    index: int
    image_ids: tuple
    epsilon_255: int

    @property
    def epsilon(self) -> float:
        return self.epsilon_255 / 255.0


def plan_round(records, batch_size: int, seed: int) -> list:
    """Contiguous batches in dataset order, each with its own seeded
    epsilon draw from the four-level set."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    records = list(records)
    if not records:
        raise ValueError("cannot plan a round over an empty dataset")
    plans = []
    for b, start in enumerate(range(0, len(records), batch_size)):
        chunk = records[start:start + batch_size]
        rng = Rng(derive_seed(seed, "epsilon", b))
        eps = EPSILON_LEVELS_255[rng.randint(len(EPSILON_LEVELS_255))]
        plans.append(BatchPlan(b, tuple(r.image_id for r in chunk), eps))
    return plans


# ---------------------------------------------------------------------------
# Outcome matrix

class OutcomeMatrix:
    """Everything scoring needs, self-contained (truth labels included)."""

    def __init__(self, n_classes: int):
        self.n_classes = int(n_classes)
        self.submissions = {}     # id -> kind
        self.image_order = []     # ids in dataset order
        self.images = {}          # id -> (batch_index, true_label, target_label|None)
        self.batches = {}         # batch_index -> epsilon_255
        self.produced = {}        # (attack_id, image_id) -> bool
        self.labels = {}          # (attack_id, defense_id, image_id) -> int|None
        self.times = {}           # (submission_id, cell) -> seconds
        self.failures = {}        # (submission_id, cell) -> reason

    # -- construction --------------------------------------------------------

    def add_submission(self, sub_id: str, kind: str) -> None:
        if kind not in SUBMISSION_KINDS:
            raise ValueError(f"unknown submission kind {kind!r}")
        if sub_id in self.submissions:
            raise ValueError(f"duplicate submission id {sub_id!r}")
        self.submissions[sub_id] = kind

    def add_image(self, image_id: str, batch_index: int, true_label: int,
                  target_label=None) -> None:
        if image_id in self.images:
            raise ValueError(f"duplicate image id {image_id!r}")
        self.image_order.append(image_id)
        self.images[image_id] = (int(batch_index), int(true_label),
                                 None if target_label is None else int(target_label))

    def add_batch(self, index: int, epsilon_255: int) -> None:
        self.batches[int(index)] = int(epsilon_255)

    def ids_of_kind(self, *kinds) -> list:
        return sorted(i for i, k in self.submissions.items() if k in kinds)

    # -- serialization -------------------------------------------------------

    def write(self, path) -> None:
        """One CSV, first column is the record type; rows in canonical order
        so the bytes do not depend on execution scheduling."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(OUTCOMES_HEADER)
            w.writerow(("meta", "n_classes", self.n_classes, "", ""))
            for sub_id in sorted(self.submissions):
                w.writerow(("submission", sub_id, self.submissions[sub_id], "", ""))
            for b in sorted(self.batches):
                w.writerow(("batch", b, self.batches[b], "", ""))
            for image_id in self.image_order:
                b, true, target = self.images[image_id]
                w.writerow(("image", image_id, b, true,
                            "" if target is None else target))
            for a_id, image_id in sorted(self.produced):
                w.writerow(("produced", a_id, image_id,
                            int(self.produced[(a_id, image_id)]), ""))
            for a_id, d_id, image_id in sorted(self.labels):
                lab = self.labels[(a_id, d_id, image_id)]
                w.writerow(("label", a_id, d_id, image_id,
                            "" if lab is None else lab))
            for sub_id, cell in sorted(self.times):
                w.writerow(("time", sub_id, cell, "",
                            format(self.times[(sub_id, cell)], ".6f")))
            for sub_id, cell in sorted(self.failures):
                w.writerow(("fail", sub_id, cell, "",
                            self.failures[(sub_id, cell)]))

    @classmethod
    def read(cls, path) -> "OutcomeMatrix":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != OUTCOMES_HEADER:
            raise ValueError(f"{path}: not an outcome matrix (bad header)")
        matrix = None
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            kind, a, b, c, value = row
            if kind == "meta":
                if a != "n_classes":
                    raise ValueError(f"{path}:{lineno}: unknown meta key {a!r}")
                matrix = cls(int(b))
            elif matrix is None:
                raise ValueError(f"{path}: meta row must precede {kind!r} rows")
            elif kind == "submission":
                matrix.add_submission(a, b)
            elif kind == "batch":
                matrix.add_batch(int(a), int(b))
            elif kind == "image":
                matrix.add_image(a, int(b), int(c), None if value == "" else int(value))
            elif kind == "produced":
                matrix.produced[(a, b)] = bool(int(c))
            elif kind == "label":
                matrix.labels[(a, b, c)] = None if value == "" else int(value)
            elif kind == "time":
                matrix.times[(a, b)] = float(value)
            elif kind == "fail":
                matrix.failures[(a, b)] = value
            else:
                raise ValueError(f"{path}:{lineno}: unknown record type {kind!r}")
        if matrix is None:
            raise ValueError(f"{path}: no meta row")
        return matrix


# ---------------------------------------------------------------------------
# Cell execution

@dataclass
class AttackCellResult:
    images: dict = field(default_factory=dict)   # image_id -> projected pixels
    reason: str | None = None
    seconds: float = 0.0


@dataclass
class DefenseCellResult:
    labels: dict = field(default_factory=dict)   # image_id -> int|None
    reason: str | None = None
    seconds: float = 0.0


def _write_batch_inputs(directory: str, items, targeted: bool) -> None:
    """items: (image_id, pixels, target_label) triples."""
    with open(os.path.join(directory, "images.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("image_id", "filename", "target_label") if targeted
                   else ("image_id", "filename"))
        for image_id, pixels, target in items:
            filename = f"{image_id}.ppm"
            data.write_image(os.path.join(directory, filename), pixels)
            w.writerow((image_id, filename, target) if targeted
                       else (image_id, filename))


def run_attack_on_batch(sub: Submission, batch_records, epsilon_255: int,
                        budget: float, seed: int,
                        clock=time.perf_counter) -> AttackCellResult:
    """Execute one (attack, batch) cell.  Every produced image is projected
    into the epsilon ball and [0,1] regardless of what the runner emitted;
    images absent when the budget or the runner dies are missing."""
    if sub.kind not in ATTACK_KINDS:
        raise ValueError(f"{sub.id} is a {sub.kind}, not an attack")
    targeted = sub.kind == "targeted_attack"
    epsilon = epsilon_255 / 255.0
    result = AttackCellResult()
    start = clock()

    if isinstance(sub.runner, InProcessAttack):
        for rec in batch_records:
            if clock() - start > budget:
                result.reason = "budget exhausted"
                break
            rng = Rng(derive_seed(seed, "image", rec.image_id))
            target = rec.target_label if targeted else None
            try:
                raw = sub.runner.fn(rec.pixels, epsilon, target, rng)
            except Exception as exc:
                result.reason = f"crash: {type(exc).__name__}: {exc}"
                break
            raw = np.asarray(raw, dtype=np.float64)
            if raw.shape != rec.pixels.shape:
                result.reason = f"crash: output shape {raw.shape} != {rec.pixels.shape}"
                break
            result.images[rec.image_id] = project_linf(raw, rec.pixels, epsilon)
    elif isinstance(sub.runner, SubprocessRunner):
        with tempfile.TemporaryDirectory(prefix="attack_in_") as in_dir, \
                tempfile.TemporaryDirectory(prefix="attack_out_") as out_dir:
            _write_batch_inputs(
                in_dir,
                [(r.image_id, r.pixels, r.target_label) for r in batch_records],
                targeted)
            cmd = list(sub.runner.command) + [
                "--input-dir", in_dir, "--output-dir", out_dir,
                "--epsilon", str(epsilon_255)]
            try:
                proc = subprocess.run(cmd, capture_output=True, timeout=budget)
                if proc.returncode != 0:
                    result.reason = f"exit code {proc.returncode}"
            except subprocess.TimeoutExpired:
                result.reason = "budget exhausted"
            except OSError as exc:
                result.reason = f"crash: {exc}"
            # salvage whatever completed images exist
            for rec in batch_records:
                path = os.path.join(out_dir, f"{rec.image_id}.ppm")
                if not os.path.exists(path):
                    continue
                try:
                    raw = data.read_image(path)
                except (ValueError, OSError):
                    continue
                if raw.shape != rec.pixels.shape:
                    continue
                result.images[rec.image_id] = project_linf(raw, rec.pixels, epsilon)
    else:
        raise TypeError(f"{sub.id}: unsupported runner {type(sub.runner).__name__}")

    result.seconds = clock() - start
    return result


def _valid_label(value, n_classes: int):
    try:
        label = int(value)
    except (TypeError, ValueError):
        return None
    return label if 0 <= label < n_classes else None


def run_defense_on_batch(sub: Submission, images, n_classes: int,
                         budget: float, seed: int,
                         clock=time.perf_counter) -> DefenseCellResult:
    """Execute one (defense, attack, batch) cell over the images that exist.
    Missing, invalid, or out-of-range outputs become null labels."""
    if sub.kind != "defense":
        raise ValueError(f"{sub.id} is a {sub.kind}, not a defense")
    images = list(images)
    result = DefenseCellResult()
    start = clock()

    if isinstance(sub.runner, InProcessDefense):
        for image_id, pixels in images:
            if clock() - start > budget:
                result.reason = "budget exhausted"
                break
            rng = Rng(derive_seed(seed, "image", image_id))
            try:
                label = sub.runner.fn(pixels, rng)
            except Exception as exc:
                result.reason = f"crash: {type(exc).__name__}: {exc}"
                break
            result.labels[image_id] = _valid_label(label, n_classes)
        for image_id, _ in images:
            result.labels.setdefault(image_id, None)
    elif isinstance(sub.runner, SubprocessRunner):
        with tempfile.TemporaryDirectory(prefix="defense_in_") as in_dir, \
                tempfile.TemporaryDirectory(prefix="defense_out_") as out_dir:
            _write_batch_inputs(
                in_dir, [(i, px, None) for i, px in images], targeted=False)
            labels_path = os.path.join(out_dir, "labels.csv")
            cmd = list(sub.runner.command) + [
                "--input-dir", in_dir, "--output-file", labels_path]
            try:
                proc = subprocess.run(cmd, capture_output=True, timeout=budget)
                if proc.returncode != 0:
                    result.reason = f"exit code {proc.returncode}"
            except subprocess.TimeoutExpired:
                result.reason = "budget exhausted"
            except OSError as exc:
                result.reason = f"crash: {exc}"
            parsed = {}
            if os.path.exists(labels_path):
                with open(labels_path, newline="") as fh:
                    for line in fh:
                        parts = line.strip().split(",")
                        if len(parts) == 2:
                            parsed[parts[0]] = _valid_label(parts[1], n_classes)
            for image_id, _ in images:
                result.labels[image_id] = parsed.get(image_id)
    else:
        raise TypeError(f"{sub.id}: unsupported runner {type(sub.runner).__name__}")

    result.seconds = clock() - start
    return result


# ---------------------------------------------------------------------------
# Scoring

def eligibility(outcomes: OutcomeMatrix):
    """(A, D): attacks that produced every image, defenses that labeled
    every image they were given."""
    attack_ids = outcomes.ids_of_kind(*ATTACK_KINDS)
    defense_ids = outcomes.ids_of_kind("defense")
    eligible_attacks = [
        a for a in attack_ids
        if all(outcomes.produced.get((a, k), False) for k in outcomes.image_order)]
    eligible_defenses = []
    for d in defense_ids:
        complete = all(
            outcomes.labels.get((a, d, k)) is not None
            for a in attack_ids for k in outcomes.image_order
            if outcomes.produced.get((a, k), False))
        if complete:
            eligible_defenses.append(d)
    return eligible_attacks, eligible_defenses


def _returned_label(outcomes: OutcomeMatrix, a: str, d: str, k: str):
    """Label the scorer sees for cell (a, d, k): the defense's label when the
    attack produced image k, else the true label (missing-image rule)."""
    if outcomes.produced.get((a, k), False):
        return outcomes.labels.get((a, d, k))
    return outcomes.images[k][1]


def compute_scores(outcomes: OutcomeMatrix) -> dict:
    """Raw and normalized round-robin scores per submission.

    Returns {submission_id: {"kind", "raw", "normalized"}}.  Raises
    UnscoreableRoundError when either eligibility set is empty."""
    eligible_attacks, eligible_defenses = eligibility(outcomes)
    attack_ids = outcomes.ids_of_kind(*ATTACK_KINDS)
    defense_ids = outcomes.ids_of_kind("defense")
    n = len(outcomes.image_order)
    if not eligible_attacks or not eligible_defenses:
        diag = {
            "eligible_attacks": eligible_attacks,
            "eligible_defenses": eligible_defenses,
            "attack_produced_counts": {
                a: sum(outcomes.produced.get((a, k), False)
                       for k in outcomes.image_order)
                for a in attack_ids},
            "defense_null_counts": {
                d: sum(outcomes.labels.get((a, d, k)) is None
                       for a in attack_ids for k in outcomes.image_order
                       if outcomes.produced.get((a, k), False))
                for d in defense_ids},
            "failures": dict(outcomes.failures),
        }
        empty = "attack" if not eligible_attacks else "defense"
        raise UnscoreableRoundError(
            f"round unscoreable: the eligible {empty} set is empty", diag)

    scores = {}
    for a in attack_ids:
        kind = outcomes.submissions[a]
        raw = 0
        for d in eligible_defenses:
            for k in outcomes.image_order:
                label = _returned_label(outcomes, a, d, k)
                _, true, target = outcomes.images[k]
                if kind == "targeted_attack":
                    raw += int(label is not None and label == target)
                else:
                    raw += int(label is not None and label != true)
        scores[a] = {"kind": kind, "raw": raw,
                     "normalized": raw / (len(eligible_defenses) * n)}
    for d in defense_ids:
        raw = 0
        for a in eligible_attacks:
            for k in outcomes.image_order:
                label = _returned_label(outcomes, a, d, k)
                raw += int(label is not None and label == outcomes.images[k][1])
        scores[d] = {"kind": "defense", "raw": raw,
                     "normalized": raw / (len(eligible_attacks) * n)}
    return scores


def worst_case_scores(outcomes: OutcomeMatrix) -> dict:
    """Per-submission minimum over opponents: a defense's lowest per-attack
    accuracy; an attack's lowest per-defense miss (non-targeted) or hit
    (targeted, informational) rate."""
    eligible_attacks, eligible_defenses = eligibility(outcomes)
    n = len(outcomes.image_order)
    worst = {}
    for a in outcomes.ids_of_kind(*ATTACK_KINDS):
        kind = outcomes.submissions[a]
        rates = []
        for d in eligible_defenses:
            hits = 0
            for k in outcomes.image_order:
                label = _returned_label(outcomes, a, d, k)
                _, true, target = outcomes.images[k]
                if kind == "targeted_attack":
                    hits += int(label is not None and label == target)
                else:
                    hits += int(label is not None and label != true)
            rates.append(hits / n)
        worst[a] = min(rates) if rates else 0.0
    for d in outcomes.ids_of_kind("defense"):
        rates = []
        for a in eligible_attacks:
            hits = sum(
                int((lab := _returned_label(outcomes, a, d, k)) is not None
                    and lab == outcomes.images[k][1])
                for k in outcomes.image_order)
            rates.append(hits / n)
        worst[d] = min(rates) if rates else 0.0
    return worst


def median_batch_seconds(outcomes: OutcomeMatrix) -> dict:
    out = {}
    for sub_id in outcomes.submissions:
        times = [v for (s, _), v in outcomes.times.items() if s == sub_id]
        out[sub_id] = statistics.median(times) if times else 0.0
    return out


def write_scoreboard(path, outcomes: OutcomeMatrix) -> None:
    scores = compute_scores(outcomes)
    worst = worst_case_scores(outcomes)
    medians = median_batch_seconds(outcomes)
    rows = sorted(scores.items(),
                  key=lambda kv: (kv[1]["kind"], -kv[1]["normalized"], kv[0]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCOREBOARD_HEADER)
        for sub_id, s in rows:
            w.writerow((sub_id, s["kind"], s["raw"],
                        format(s["normalized"], ".6f"),
                        format(worst[sub_id], ".6f"),
                        format(medians[sub_id], ".3f")))


# ---------------------------------------------------------------------------
# Round orchestration

@dataclass
class RoundConfig:
    records: list                    # ImageRecord sequence, targets assigned
    attacks: list                    # attack Submissions
    defenses: list                   # defense Submissions
    n_classes: int = 10
    batch_size: int = 100
    budget_seconds: float = 10.0
    seed: int = 0
    workers: int = 1
    record_walltime: bool = False    # False writes 0.0 so round files are
                                     # byte-reproducible across reruns
    clock: object = time.perf_counter

    def __post_init__(self):
        ids = [s.id for s in self.attacks] + [s.id for s in self.defenses]
        if len(set(ids)) != len(ids):
            raise ValueError("submission ids must be unique within a round")
        for s in self.attacks:
            if s.kind not in ATTACK_KINDS:
                raise ValueError(f"{s.id} registered as attack but kind is {s.kind}")
        for s in self.defenses:
            if s.kind != "defense":
                raise ValueError(f"{s.id} registered as defense but kind is {s.kind}")
        if any(r.target_label is None for r in self.records):
            raise ValueError("round records need target labels (assign_targets)")


@dataclass
class RoundReport:
    outcomes_path: str
    scoreboard_path: str
    timings_path: str
    scores: dict
    worst_case: dict


def _map_cells(fn, cells, workers: int):
    if workers <= 1 or len(cells) <= 1:
        return {cell: fn(cell) for cell in cells}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {cell: pool.submit(fn, cell) for cell in cells}
        return {cell: fut.result() for cell, fut in futures.items()}


def run_round(cfg: RoundConfig, output_dir) -> RoundReport:
    """Plan, attack, defend, score; everything lands under output_dir.

    Writes outcomes.csv (the full matrix), timings.csv, and scoreboard.csv.
    The scoreboard is computed from the outcomes file as re-read from disk,
    so a later standalone rescore reproduces it byte for byte."""
    os.makedirs(output_dir, exist_ok=True)
    by_id = {r.image_id: r for r in cfg.records}
    plans = plan_round(cfg.records, cfg.batch_size, cfg.seed)

    outcomes = OutcomeMatrix(cfg.n_classes)
    for sub in cfg.attacks + cfg.defenses:
        outcomes.add_submission(sub.id, sub.kind)
    for plan in plans:
        outcomes.add_batch(plan.index, plan.epsilon_255)
        for image_id in plan.image_ids:
            rec = by_id[image_id]
            outcomes.add_image(image_id, plan.index, rec.true_label, rec.target_label)

    def attack_cell(cell):
        sub, plan = cell
        seed = derive_seed(cfg.seed, sub.id, plan.index)
        return run_attack_on_batch(
            sub, [by_id[i] for i in plan.image_ids], plan.epsilon_255,
            cfg.budget_seconds, seed, clock=cfg.clock)

    attack_cells = [(sub, plan) for sub in cfg.attacks for plan in plans]
    attack_results = _map_cells(attack_cell, attack_cells, cfg.workers)

    adversarial = {}   # (attack_id, image_id) -> pixels
    for (sub, plan), res in attack_results.items():
        for image_id in plan.image_ids:
            have = image_id in res.images
            outcomes.produced[(sub.id, image_id)] = have
            if have:
                adversarial[(sub.id, image_id)] = res.images[image_id]
        cell = str(plan.index)
        outcomes.times[(sub.id, cell)] = res.seconds if cfg.record_walltime else 0.0
        if res.reason:
            outcomes.failures[(sub.id, cell)] = res.reason

    def defense_cell(cell):
        sub, attack, plan = cell
        seed = derive_seed(cfg.seed, sub.id, attack.id, plan.index)
        images = [(i, adversarial[(attack.id, i)]) for i in plan.image_ids
                  if (attack.id, i) in adversarial]
        return run_defense_on_batch(sub, images, cfg.n_classes,
                                    cfg.budget_seconds, seed, clock=cfg.clock)

    defense_cells = [(sub, attack, plan) for sub in cfg.defenses
                     for attack in cfg.attacks for plan in plans]
    defense_results = _map_cells(defense_cell, defense_cells, cfg.workers)

    for (sub, attack, plan), res in defense_results.items():
        for image_id, label in res.labels.items():
            outcomes.labels[(attack.id, sub.id, image_id)] = label
        cell = f"{attack.id}|{plan.index}"
        outcomes.times[(sub.id, cell)] = res.seconds if cfg.record_walltime else 0.0
        if res.reason:
            outcomes.failures[(sub.id, cell)] = res.reason

    outcomes_path = os.path.join(output_dir, "outcomes.csv")
    outcomes.write(outcomes_path)

    timings_path = os.path.join(output_dir, "timings.csv")
    with open(timings_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("submission_id", "cell", "seconds"))
        for sub_id, cell in sorted(outcomes.times):
            w.writerow((sub_id, cell, format(outcomes.times[(sub_id, cell)], ".6f")))

    reread = OutcomeMatrix.read(outcomes_path)
    scoreboard_path = os.path.join(output_dir, "scoreboard.csv")
    write_scoreboard(scoreboard_path, reread)
    return RoundReport(outcomes_path, scoreboard_path, timings_path,
                       compute_scores(reread), worst_case_scores(reread))
