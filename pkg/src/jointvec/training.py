"""Minibatch AdaGrad over the contrastive objective.

Single mode trains on one parallel corpus; joint mode interleaves
minibatches from several sub-corpora that share a pivot language, so the
pivot table receives updates from every sub-corpus and all languages land
in one vector space. Single-threaded runs are bitwise deterministic given
(config, corpus, seed): shuffling uses one generator per (epoch,
sub-corpus), and noise comes from that same generator in schedule order
before any gradient is evaluated, so the optional thread pool only changes
wall-clock.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .composition import CompositionKind
from .corpus import DocumentCorpus, sample_indices_excluding
from .embeddings import EmbeddingTable, ModelBundle, export_table, import_table
from .errors import AlignmentError, CheckpointError, ConfigError, ContractError
from .objective import GradMap, doc_loss_and_grads, merge_grads, pair_loss_and_grads

CHECKPOINT_META = "meta.txt"


@dataclass
class TrainConfig:
    d: int = 128
    margin: float | None = None  # None resolves to d
    k: int = 50
    lam: float = 1.0
    step: float = 0.05
    batch: int = 50
    epochs: int = 5
    kind: CompositionKind = CompositionKind.ADD
    doc_signal: bool = False
    mode: str = "single"
    seed: int = 1
    epsilon: float = 1e-6
    threads: int = 1

    def __post_init__(self):
        if self.margin is None:
            self.margin = float(self.d)
        checks = [
            (self.d >= 1, f"d must be >= 1, got {self.d}"),
            (self.margin > 0, f"margin must be > 0, got {self.margin}"),
            (self.k >= 1, f"k (noise count) must be >= 1, got {self.k}"),
            (self.lam >= 0, f"lambda must be >= 0, got {self.lam}"),
            (self.step > 0, f"step must be > 0, got {self.step}"),
            (self.batch >= 1, f"batch must be >= 1, got {self.batch}"),
            (self.epochs >= 1, f"epochs must be >= 1, got {self.epochs}"),
            (self.epsilon > 0, f"epsilon must be > 0, got {self.epsilon}"),
            (self.threads >= 1, f"threads must be >= 1, got {self.threads}"),
            (self.mode in ("single", "joint"), f"mode must be single or joint, got {self.mode!r}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)


class AdaGradState:
    """Per-language accumulated squared gradients, same shape as the tables."""

    def __init__(self, bundle: ModelBundle = None, acc: dict = None):
        if acc is not None:
            self.acc = acc
        elif bundle is not None:
            self.acc = {lang: np.zeros_like(t.matrix) for lang, t in bundle.tables.items()}
        else:
            raise ContractError("AdaGradState needs a bundle or explicit accumulators")

    def accumulator(self, lang: str) -> np.ndarray:
        return self.acc[lang]


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    active_fractions: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)

    def log_epoch(self, loss: float, active_fraction: float, seconds: float) -> None:
        self.epoch_losses.append(loss)
        self.active_fractions.append(active_fraction)
        self.epoch_seconds.append(seconds)


def adagrad_apply(tables: ModelBundle, grads: GradMap, state: AdaGradState, config: TrainConfig) -> None:
    """One update: accumulate squared (regularized) gradients, scale the step.

    For each touched row w with raw gradient g: g += lambda * w, then
    G += g^2 and w -= step * g / sqrt(G + epsilon). Untouched rows see
    neither update nor regularizer. A non-finite gradient rejects the whole
    update before anything mutates.
    """
    for key, g in grads.items():
        if not np.isfinite(g).all():
            raise ContractError(f"non-finite gradient for {key}")
    for (lang, wid), g in grads.items():
        w = tables.table(lang).matrix[wid]
        g_eff = g + config.lam * w
        acc = state.acc[lang][wid]
        acc += g_eff * g_eff
        w -= config.step * g_eff / np.sqrt(acc + config.epsilon)


@dataclass
class _Stream:
    """One sub-corpus bound to the model bundle its gradient tasks read."""

    corpus: object
    bundle: ModelBundle

    @property
    def languages(self) -> tuple:
        return (self.corpus.src_lang, self.corpus.tgt_lang)

    def eval_pair(self, idx: int, noise, config: TrainConfig):
        """Returns (LossBreakdown, grads, total hinge-term count)."""
        corpus = self.corpus
        pair = corpus.pairs[idx]
        if isinstance(corpus, DocumentCorpus):
            noise_docs, sentence_noise = noise
            breakdown, grads = doc_loss_and_grads(
                pair, noise_docs, self.bundle, config.kind, config.margin,
                True, self.languages, sentence_noise,
            )
            terms = len(noise_docs) + sum(len(sn) for sn in sentence_noise)
        else:
            breakdown, grads = pair_loss_and_grads(
                pair, noise, self.bundle, config.kind, config.margin, self.languages
            )
            terms = len(noise)
        return breakdown, grads, terms

    def draw_noise(self, idx: int, config: TrainConfig, rng):
        corpus = self.corpus
        if isinstance(corpus, DocumentCorpus):
            pair = corpus.pairs[idx]
            if len(pair.source.sentences) != len(pair.target.sentences):
                raise AlignmentError(
                    f"document pair {idx} has {len(pair.source.sentences)} vs "
                    f"{len(pair.target.sentences)} sentences; the combined signal "
                    "needs sentence-aligned documents"
                )
            picks = sample_indices_excluding(len(corpus.pairs), idx, config.k, rng)
            noise_docs = [corpus.pairs[i].target for i in picks]
            pool = corpus.flat_target_pool()
            sentence_noise = []
            for j in range(len(pair.target.sentences)):
                flat = corpus.flat_index(idx, j)
                s_picks = sample_indices_excluding(len(pool), flat, config.k, rng)
                sentence_noise.append([pool[i] for i in s_picks])
            return noise_docs, sentence_noise
        picks = sample_indices_excluding(len(corpus.pairs), idx, config.k, rng)
        return [corpus.pairs[i].target for i in picks]


def _epoch_schedule(streams: list, config: TrainConfig, epoch: int):
    """Shuffle each sub-corpus, cut into minibatches, interleave round-robin.

    Returns per-corpus generators (reused afterwards for that corpus's noise
    draws) and the batch list as (corpus index, index array) in execution
    order.
    """
    rngs = []
    chunked = []
    for ci, stream in enumerate(streams):
        rng = np.random.default_rng([config.seed + epoch, ci])
        order = rng.permutation(len(stream.corpus.pairs))
        rngs.append(rng)
        chunked.append([order[i : i + config.batch] for i in range(0, len(order), config.batch)])
    batches = []
    for round_i in range(max(len(c) for c in chunked)):
        for ci, chunks in enumerate(chunked):
            if round_i < len(chunks):
                batches.append((ci, chunks[round_i]))
    return rngs, batches


def train_joint(
    corpora: list,
    tables: ModelBundle,
    config: TrainConfig,
    state: AdaGradState = None,
    start_epoch: int = 0,
    on_epoch=None,
) -> TrainReport:
    """Run epochs [start_epoch, config.epochs) of minibatch AdaGrad in place.

    All sub-corpora must name the same source-side (pivot) language; its
    table is one shared object, so an update triggered by any sub-corpus is
    visible to every later batch. `on_epoch(epoch, report)` fires after each
    completed epoch, e.g. for checkpointing.
    """
    if not corpora:
        raise ConfigError("need at least one sub-corpus")
    pivots = {c.src_lang for c in corpora}
    if len(pivots) != 1:
        raise ConfigError(f"sub-corpora must share one pivot language, got {sorted(pivots)}")
    if not 0 <= start_epoch <= config.epochs:
        raise ConfigError(f"start_epoch {start_epoch} outside [0, {config.epochs}]")
    streams = []
    for c in corpora:
        if config.doc_signal != isinstance(c, DocumentCorpus):
            raise ConfigError(
                "doc_signal takes document corpora; plain parallel corpora need it off"
            )
        tables.table(c.src_lang), tables.table(c.tgt_lang)  # fail fast on missing languages
        streams.append(_Stream(c, tables))
    if state is None:
        state = AdaGradState(tables)

    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    report = TrainReport()
    try:
        for epoch in range(start_epoch, config.epochs):
            t0 = time.perf_counter()
            epoch_loss = 0.0
            total_terms = 0
            active_terms = 0
            rngs, batches = _epoch_schedule(streams, config, epoch)
            for ci, chunk in batches:
                stream = streams[ci]
                rng = rngs[ci]
                tasks = [(int(idx), stream.draw_noise(int(idx), config, rng)) for idx in chunk]
                if pool is None:
                    results = [stream.eval_pair(idx, noise, config) for idx, noise in tasks]
                else:
                    results = list(
                        pool.map(lambda t: stream.eval_pair(t[0], t[1], config), tasks)
                    )
                batch_grads: GradMap = {}
                for breakdown, grads, terms in results:
                    epoch_loss += breakdown.hinge_total
                    active_terms += breakdown.active_noise_count
                    total_terms += terms
                    merge_grads(batch_grads, grads)
                adagrad_apply(tables, batch_grads, state, config)
            report.log_epoch(
                epoch_loss, active_terms / max(total_terms, 1), time.perf_counter() - t0
            )
            if on_epoch is not None:
                on_epoch(epoch, report)
    finally:
        if pool is not None:
            pool.shutdown()
    return report


def train_single(
    corpus,
    tables: ModelBundle,
    config: TrainConfig,
    state: AdaGradState = None,
    start_epoch: int = 0,
    on_epoch=None,
) -> TrainReport:
    """Train on one parallel corpus; the one-sub-corpus case of train_joint."""
    return train_joint([corpus], tables, config, state, start_epoch, on_epoch)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, CompositionKind):
        return v.value
    return str(v)


def checkpoint(
    tables: ModelBundle,
    state: AdaGradState,
    path,
    config: TrainConfig,
    epoch: int,
) -> None:
    """Write <lang>.emb and <lang>.adagrad per language plus meta.txt.

    Both matrices use the embedding text format, so a checkpoint doubles as
    an export; meta.txt is key=value with the config echo, epoch counter,
    and seed. Writing is deterministic: same inputs, same bytes.
    """
    os.makedirs(path, exist_ok=True)
    for lang in tables.languages:
        vocab = tables.vocab(lang)
        export_table(tables.table(lang), vocab, os.path.join(path, f"{lang}.emb"))
        export_table(
            EmbeddingTable(lang, state.acc[lang]), vocab, os.path.join(path, f"{lang}.adagrad")
        )
    meta = {
        "languages": ",".join(tables.languages),
        "epoch": epoch,
        "d": config.d,
        "margin": config.margin,
        "k": config.k,
        "lambda": config.lam,
        "step": config.step,
        "batch": config.batch,
        "epochs": config.epochs,
        "kind": config.kind,
        "doc_signal": config.doc_signal,
        "mode": config.mode,
        "seed": config.seed,
        "epsilon": config.epsilon,
        "threads": config.threads,
    }
    with open(os.path.join(path, CHECKPOINT_META), "w", encoding="utf-8") as fh:
        for key in sorted(meta):
            fh.write(f"{key}={_format_value(meta[key])}\n")


def _parse_meta(path) -> dict:
    meta = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CheckpointError(f"{path}: malformed line {line!r}")
                key, _, value = line.partition("=")
                meta[key] = value
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint metadata: {exc}") from exc
    return meta


def resume(path):
    """Load a checkpoint directory back into memory.

    Returns (ModelBundle, AdaGradState, TrainConfig, epoch). Missing files,
    vocabulary disagreements between the embedding and accumulator files,
    or negative accumulator entries all fail loudly.
    """
    meta = _parse_meta(os.path.join(path, CHECKPOINT_META))
    for key in ("languages", "epoch", "d", "kind", "seed"):
        if key not in meta:
            raise CheckpointError(f"checkpoint metadata missing {key!r}")
    languages = meta["languages"].split(",")
    vocabs = {}
    tables = {}
    acc = {}
    for lang in languages:
        emb_path = os.path.join(path, f"{lang}.emb")
        ada_path = os.path.join(path, f"{lang}.adagrad")
        for p in (emb_path, ada_path):
            if not os.path.exists(p):
                raise CheckpointError(f"checkpoint is missing {p}")
        vocab, table = import_table(emb_path, lang)
        ada_vocab, ada_table = import_table(ada_path, lang)
        if ada_vocab.tokens != vocab.tokens:
            raise CheckpointError(f"{lang}: accumulator vocabulary disagrees with embeddings")
        if (ada_table.matrix < 0).any():
            raise CheckpointError(f"{lang}: negative AdaGrad accumulator entries")
        vocabs[lang] = vocab
        tables[lang] = table
        acc[lang] = ada_table.matrix
    try:
        config = TrainConfig(
            d=int(meta["d"]),
            margin=float(meta["margin"]),
            k=int(meta["k"]),
            lam=float(meta["lambda"]),
            step=float(meta["step"]),
            batch=int(meta["batch"]),
            epochs=int(meta["epochs"]),
            kind=CompositionKind(meta["kind"]),
            doc_signal=meta.get("doc_signal") == "true",
            mode=meta.get("mode", "single"),
            seed=int(meta["seed"]),
            epsilon=float(meta.get("epsilon", "1e-06")),
            threads=int(meta.get("threads", "1")),
        )
    except (KeyError, ValueError, ConfigError) as exc:
        raise CheckpointError(f"invalid checkpoint metadata: {exc}") from exc
    bundle = ModelBundle(vocabs, tables, config.kind)
    return bundle, AdaGradState(acc=acc), config, int(meta["epoch"])
