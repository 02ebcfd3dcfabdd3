"""Pre-training, the clustering/training fine-tune loop, and ablation sweeps."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import clustering, labels as softlabels, metrics
from .clustering import DcpSchedule, dbscan, dwc_weights, pairwise_distance
from .config import TOGGLES, RunConfig, dump_config
from .encoder import (
    AdamState,
    EncoderParams,
    adam_step,
    backward,
    ema_update,
    encode,
    forward,
    gei,
    init_params,
)
from .loss import infonce_hard, infonce_soft
from .membank import MemoryBank, init_average, init_weighted
from .silhouette import MODES, SilhouetteSequence, _morph_body

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "epoch",
    "f1",
    "mse",
    "rank1",
    "label_accuracy",
    "noise_fraction",
    "epsilon_used",
    "num_clusters",
    "mean_loss",
)


@dataclass
class GaitDataset:
    """Gait-energy inputs plus, optionally, their clothing-augmented versions.

    ``augmented[mode]`` holds the gait-energy input of each sequence after
    ``augment_sequence(seq, mode=mode)``.  Drawing a mode per sample and
    looking the row up is the same as augmenting the sequence on the fly.
    """

    inputs: np.ndarray
    sample_ids: list
    identities: np.ndarray | None = None
    clothing: np.ndarray | None = None
    augmented: dict | None = None

    def __len__(self):
        return self.inputs.shape[0]

    @classmethod
    def from_sequences(cls, sequences, identities=None, clothing=None, augment=True):
        seqs = [s if isinstance(s, SilhouetteSequence) else SilhouetteSequence(s) for s in sequences]
        if not seqs:
            raise ValueError("no sequences")
        inputs = np.stack([gei(s) for s in seqs])
        augmented = None
        if augment:
            augmented = {m: np.stack([gei(_morph_body(s.frames, m)) for s in seqs]) for m in MODES}
        ids = [s.sample_id or f"s{i:05d}" for i, s in enumerate(seqs)]
        return cls(
            inputs,
            ids,
            None if identities is None else np.asarray(identities),
            None if clothing is None else np.asarray(clothing),
            augmented,
        )

    def subset(self, mask):
        idx = np.flatnonzero(mask)
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        aug = None if self.augmented is None else {m: a[idx] for m, a in self.augmented.items()}
        return GaitDataset(
            self.inputs[idx], [self.sample_ids[i] for i in idx],
            pick(self.identities), pick(self.clothing), aug,
        )


@dataclass
class RunLog:
    config: RunConfig
    epochs: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    skipped_epochs: list = field(default_factory=list)
    assignments: list = field(default_factory=list)
    adam_steps: int = 0

    def config_echo(self):
        return dump_config(self.config)

    def metrics_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for row in self.epochs:
            writer.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
        return buf.getvalue()

    def losses_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "iteration", "loss"])
        for epoch, it, value in self.losses:
            writer.writerow([epoch, it, _fmt(value)])
        return buf.getvalue()

    def final(self, key):
        return self.epochs[-1][key] if self.epochs else float("nan")

    def mean(self, key):
        vals = [r[key] for r in self.epochs if np.isfinite(r[key])]
        return float(np.mean(vals)) if vals else float("nan")


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def _rngs(seed):
    """Independent streams: init, batch sampling, augmentation, label noise."""
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))


def inject_label_noise(labels, fraction, rng) -> np.ndarray:
    """Move ``round(fraction * clustered)`` samples to a different random cluster.

    Noise samples stay noise, and a move that would empty a cluster is skipped.
    """
    labels = np.asarray(labels).copy()
    num = int(labels.max()) + 1 if (labels >= 0).any() else 0
    clustered = np.flatnonzero(labels >= 0)
    if num < 2 or fraction <= 0:
        return labels
    sizes = np.bincount(labels[clustered], minlength=num)
    picks = rng.choice(clustered, size=int(round(fraction * clustered.size)), replace=False)
    for i in np.sort(picks):
        old = labels[i]
        if sizes[old] <= 1:
            continue
        new = rng.integers(num - 1)
        new += new >= old
        labels[i] = new
        sizes[old] -= 1
        sizes[new] += 1
    return labels


def sample_batch(members, num_identities, num_instances, rng) -> np.ndarray:
    """``num_identities`` clusters x ``num_instances`` members.

    Clusters are drawn without replacement (all of them when there are fewer);
    members are drawn with replacement only when a cluster is too small.
    """
    c = len(members)
    chosen = rng.permutation(c)[: min(num_identities, c)]
    rows = []
    for cid in chosen:
        pool = members[cid]
        rows.append(rng.choice(pool, size=num_instances, replace=pool.size < num_instances))
    return np.concatenate(rows)


def split_rank1(features, identities, clothing=None) -> float:
    """Gallery = base clothing, probes = every other clothing mode.

    Without clothing variation the set is split into alternating halves.
    """
    if clothing is not None and len(np.unique(clothing)) > 1:
        gallery = np.asarray(clothing) == 0
    else:
        gallery = np.arange(len(features)) % 2 == 0
    identities = np.asarray(identities)
    return metrics.rank1(features[gallery], identities[gallery],
                         features[~gallery], identities[~gallery])


def evaluate_rank1(params, eval_set: GaitDataset | None) -> float:
    if eval_set is None or eval_set.identities is None:
        return float("nan")
    return split_rank1(encode(params, eval_set.inputs), eval_set.identities, eval_set.clothing)


def pretrain(source: GaitDataset, config: RunConfig, observer=None) -> EncoderParams:
    """Supervised stand-in for source-domain training.

    Hard InfoNCE against centroids of the true identities, recomputed each
    epoch by averaging and momentum-updated per iteration.
    """
    init_rng, sample_rng, _, _ = _rngs(config.seed)
    params = init_params(source.inputs.shape[1], config.hidden, config.embed_dim, init_rng)
    if source.identities is None:
        raise ValueError("pretraining needs labelled source data")
    _, targets = np.unique(source.identities, return_inverse=True)
    members = [np.flatnonzero(targets == c) for c in range(targets.max() + 1)]
    adam = AdamState(lr=config.pretrain_lr, weight_decay=config.weight_decay)
    for epoch in range(config.pretrain_epochs):
        bank = init_average(encode(params, source.inputs), targets, config.momentum)
        for it in range(config.pretrain_iterations):
            batch = sample_batch(members, config.batch_identities, config.batch_instances, sample_rng)
            feats, cache = forward(params, source.inputs[batch])
            report = infonce_hard(feats, bank, targets[batch], config.temperature)
            if not np.isfinite(report.loss):
                raise FloatingPointError("pretraining loss diverged")
            params, adam = adam_step(params, backward(params, cache, report.grad), adam)
            bank.update_batch(targets[batch], feats)
            if observer is not None:
                observer("pretrain_iteration", epoch=epoch, iteration=it, loss=report.loss)
    return params


@dataclass
class FinetuneResult:
    student: EncoderParams
    teacher: EncoderParams
    bank: MemoryBank | None
    assignment: clustering.ClusterAssignment | None
    log: RunLog


def finetune(target: GaitDataset, init: EncoderParams, config: RunConfig,
             eval_set: GaitDataset | None = None, observer=None) -> FinetuneResult:
    """Alternate clustering and training epochs on unlabelled target data.

    ``target.identities`` is read only for logging metrics.  ``observer``, if
    given, is called as ``observer(event, **data)`` for ``"epoch"`` and
    ``"iteration"`` events.
    """
    _, sample_rng, aug_rng, noise_rng = _rngs(config.seed)
    student = init.copy()
    teacher = init.copy()
    adam = AdamState(lr=config.lr, weight_decay=config.weight_decay, milestones=config.milestones)
    schedule = DcpSchedule(config.eps0, config.eta if config.dcp else 1.0, config.decay,
                           max(config.epochs, 1))
    if config.ctm and config.augment and target.augmented is None:
        raise ValueError("CTM augmentation needs a dataset built with augment=True")
    run_log = RunLog(config)
    bank = assignment = None
    truth = target.identities

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        feats = encode(student, target.inputs)
        eps = schedule.eps_at(epoch)
        dist = pairwise_distance(feats)
        assignment = dbscan(dist, eps, config.min_samples)
        if config.label_noise > 0:
            assignment = clustering.ClusterAssignment(
                inject_label_noise(assignment.labels, config.label_noise, noise_rng),
                assignment.num_clusters, eps)
        run_log.assignments.append(assignment)
        labels, num = assignment.labels, assignment.num_clusters
        row = {"epoch": epoch, "epsilon_used": eps, "num_clusters": num,
               "noise_fraction": metrics.noise_fraction(labels), "mse": float("nan"),
               "f1": float("nan"), "label_accuracy": float("nan"), "mean_loss": float("nan")}
        if truth is not None:
            row["f1"] = metrics.pairwise_f1(labels, truth)
            row["label_accuracy"] = metrics.label_accuracy(labels, truth)

        if num == 0:
            log.warning("epoch %d: no clusters at eps=%.4f, skipping training", epoch, eps)
            run_log.skipped_epochs.append(epoch)
            bank = None
            row["rank1"] = evaluate_rank1(student, eval_set)
            run_log.epochs.append(row)
            run_log.timings.append(time.perf_counter() - t0)
            continue

        if config.dwc:
            bank = init_weighted(feats, labels, dwc_weights(dist, labels).weights, config.momentum)
        else:
            bank = init_average(feats, labels, config.momentum)
        if truth is not None:
            row["mse"] = metrics.centroid_mse(bank.centroids, labels, truth, feats)
        if observer is not None:
            observer("epoch", epoch=epoch, features=feats, assignment=assignment,
                     centroids=bank.centroids.copy())

        members = assignment.members()
        epoch_losses = []
        for it in range(config.iterations):
            batch = sample_batch(members, config.batch_identities, config.batch_instances, sample_rng)
            y = labels[batch]
            f_s, cache = forward(student, target.inputs[batch])
            targets = softlabels.one_hot(y, num)
            stages = {"one_hot": targets}
            if config.cpr:
                conf = softlabels.confidence_matrix(f_s, bank)
                targets = stages["refined"] = softlabels.refine_cpr(targets, conf, config.alpha)
            if config.ctm:
                if config.augment:
                    modes = aug_rng.integers(len(MODES), size=batch.size)
                    x_t = np.where((modes == 0)[:, None],
                                   target.augmented[MODES[0]][batch],
                                   target.augmented[MODES[1]][batch])
                else:
                    x_t = target.inputs[batch]
                f_t, _ = forward(teacher, x_t)
                ids, near = softlabels.latent_cluster_set(f_t, bank, config.k)
                probs = softlabels.ctm_probabilities(ids, near, num)
                targets = stages["fused"] = softlabels.fuse(probs, targets, config.beta)
            centroids_before = bank.centroids.copy() if observer is not None else None
            report = infonce_soft(f_s, bank, targets, config.temperature)
            if not np.isfinite(report.loss):
                raise FloatingPointError(f"loss diverged at epoch {epoch}, iteration {it}")
            student, adam = adam_step(student, backward(student, cache, report.grad), adam)
            teacher = ema_update(student, teacher, config.ema)
            bank.update_batch(y, f_s)
            run_log.losses.append((epoch, it, report.loss))
            epoch_losses.append(report.loss)
            if observer is not None:
                observer("iteration", epoch=epoch, iteration=it, batch=batch, features=f_s,
                         labels=y, targets=targets, stages=stages, centroids=centroids_before,
                         loss=report.loss)
        run_log.adam_steps = adam.step
        if epoch_losses:
            row["mean_loss"] = float(np.mean(epoch_losses))
        row["rank1"] = evaluate_rank1(student, eval_set)
        run_log.epochs.append(row)
        run_log.timings.append(time.perf_counter() - t0)
        log.info("epoch %d eps=%.4f clusters=%d f1=%.4f rank1=%.4f", epoch, eps, num,
                 row["f1"], row["rank1"])

    return FinetuneResult(student, teacher, bank, assignment, run_log)


# ---------------------------------------------------------------------------
# Ablations

TABLE_ROWS = {
    "baseline": (),
    "dcp": ("dcp",),
    "dwc": ("dwc",),
    "dcp+dwc": ("dcp", "dwc"),
    "cpr": ("cpr",),
    "ctm": ("ctm", "augment"),
    "cpr+ctm": ("cpr", "ctm", "augment"),
    "all-ctm_no_aug": ("dcp", "dwc", "cpr", "ctm"),
    "all": ("dcp", "dwc", "cpr", "ctm", "augment"),
}

ABLATION_COLUMNS = ("name",) + TOGGLES + (
    "k", "decay", "eps0", "final_f1", "mean_mse", "final_rank1", "final_label_accuracy",
    "final_noise_fraction", "num_clusters",
)


@dataclass
class AblationRow:
    name: str
    config: RunConfig
    log: RunLog

    def as_dict(self):
        out = {"name": self.name}
        out.update({t: getattr(self.config, t) for t in TOGGLES})
        out.update(k=self.config.k, decay=self.config.decay, eps0=self.config.eps0,
                   final_f1=self.log.final("f1"), mean_mse=self.log.mean("mse"),
                   final_rank1=self.log.final("rank1"),
                   final_label_accuracy=self.log.final("label_accuracy"),
                   final_noise_fraction=self.log.final("noise_fraction"),
                   num_clusters=self.log.final("num_clusters"))
        return out


def toggle_grid(names=None):
    """``[(name, toggles)]`` for named rows of the component table."""
    names = list(TABLE_ROWS) if names is None else names
    return [(n, TABLE_ROWS[n]) for n in names]


def k_grid(ks=(1, 2, 3, 4)):
    return [(f"k={k}", {"k": k}) for k in ks]


def decay_grid(modes=("square", "linear", "exponential")):
    return [(m, {"decay": m}) for m in modes]


def ablate(grid, base: RunConfig, target: GaitDataset, init: EncoderParams,
           eval_set: GaitDataset | None = None):
    """One fine-tune per grid entry, all sharing data, seed and initialization.

    Each entry is ``(name, spec)`` where ``spec`` is either a collection of
    component names to enable or a dict of config overrides.
    """
    if not grid:
        raise ValueError("ablation grid is empty")
    rows = []
    for name, spec in grid:
        cfg = base.replace(**spec) if isinstance(spec, dict) else base.with_toggles(spec)
        result = finetune(target, init, cfg, eval_set)
        rows.append(AblationRow(name, cfg, result.log))
    return rows


def ablation_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ABLATION_COLUMNS)
    for row in rows:
        d = row.as_dict()
        writer.writerow([_fmt(d[c]) for c in ABLATION_COLUMNS])
    return buf.getvalue()


def write_run(directory, result: FinetuneResult, sample_ids=None) -> Path:
    """Persist a fine-tune: config echo, metrics, losses, checkpoints, assignment."""
    from .encoder import save_params

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config.cfg").write_text(result.log.config_echo())
    (directory / "metrics.csv").write_text(result.log.metrics_csv())
    (directory / "losses.csv").write_text(result.log.losses_csv())
    # wall-clock, so kept out of the reproducible CSV outputs
    (directory / "timings.log").write_text(
        "".join(f"epoch {i} {t:.6f}s\n" for i, t in enumerate(result.log.timings))
    )
    save_params(directory / "checkpoints" / "student.bin", result.student)
    save_params(directory / "checkpoints" / "teacher.bin", result.teacher)
    if result.bank is not None:
        result.bank.save(directory / "checkpoints" / "bank.bin")
    if sample_ids is not None:
        for epoch, assignment in enumerate(result.log.assignments):
            clustering.write_assignment_csv(
                directory / "assignments" / f"epoch_{epoch:03d}.csv", sample_ids, assignment)
        if result.assignment is not None:
            clustering.write_assignment_csv(directory / "assignments" / "final.csv", sample_ids,
                                            result.assignment)
    return directory


# ---------------------------------------------------------------------------
# Synthetic domains

SOURCE_OFFSET = 10_000
EVAL_OFFSET = 20_000


@dataclass
class Domains:
    source: GaitDataset
    target: GaitDataset
    eval: GaitDataset


def split_specs(data) -> dict:
    """The ``SynthSpec`` of every split for a ``DataConfig``.

    The source pool has base clothing only, so clothing changes are the domain
    gap.  The evaluation pool holds identities disjoint from the target
    training identities, recorded in every clothing mode.
    """
    from .synthgen import SynthSpec

    def spec(n_ids, n_seq, clothing, offset):
        return SynthSpec(num_identities=n_ids, sequences_per_identity=n_seq,
                         clothing_conditions=clothing, intra_spread=data.intra_spread,
                         clothing_shift=data.clothing_shift, seed=data.data_seed,
                         frames=data.frames, identity_offset=offset)

    return {
        "source": spec(data.source_identities, data.source_sequences, 1, SOURCE_OFFSET),
        "target": spec(data.target_identities, data.target_sequences, data.clothing_conditions, 0),
        "eval": spec(data.target_identities, data.eval_sequences, data.clothing_conditions,
                     EVAL_OFFSET),
    }


def synthetic_domains(data, augment=True) -> Domains:
    """Labelled source, unlabelled target and held-out evaluation silhouettes."""
    from .synthgen import gen_silhouettes

    def build(spec, aug):
        seqs, truth = gen_silhouettes(spec)
        return GaitDataset.from_sequences(seqs, truth.identities, truth.clothing, augment=aug)

    specs = split_specs(data)
    return Domains(build(specs["source"], False), build(specs["target"], augment),
                   build(specs["eval"], False))
