"""Shared fixtures: random objective instances, finite differences, criterion log."""

import numpy as np
import pytest

import reference_model as ref
from jointvec.composition import CompositionKind
from jointvec.corpus import DocumentPair, LabeledDocument, ParallelPair, Sentence
from jointvec.embeddings import EmbeddingTable, ModelBundle, Vocabulary

CRITERION_LINES = []


@pytest.fixture
def criterion():
    """Recorder for acceptance-criterion results; lines echo in the summary."""

    def _record(num: int, passed: bool, detail: str) -> None:
        line = f"[criterion {num}] {'PASS' if passed else 'FAIL'} {detail}"
        CRITERION_LINES.append(line)
        print(line)

    return _record


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)


# ---------------------------------------------------------------------------
# small random model instances

def make_bundle(sizes: dict, d: int, seed: int, kind=CompositionKind.ADD) -> ModelBundle:
    """Gaussian tables over synthetic vocabularies {lang: V}."""
    rng = np.random.default_rng(seed)
    vocabs = {}
    tables = {}
    for lang in sorted(sizes):
        v = sizes[lang]
        vocabs[lang] = Vocabulary(f"{lang}{i}" for i in range(v))
        tables[lang] = EmbeddingTable(lang, rng.normal(0.0, np.sqrt(0.1), size=(v, d)))
    return ModelBundle(vocabs, tables, kind)


def rand_sentence(rng, vocab_size: int, max_len: int = 4) -> Sentence:
    n = int(rng.integers(1, max_len + 1))
    return Sentence(tuple(int(rng.integers(0, vocab_size)) for _ in range(n)))


def _ref_kind(kind: CompositionKind) -> str:
    return kind.value


def pair_hinges(bundle, pair, noise_sents, margin, kind) -> list:
    """All hinge pre-activation values m + e_pos - e_neg, via the reference model."""
    emb_a = bundle.table("a").matrix
    emb_b = bundle.table("b").matrix
    k = _ref_kind(kind)
    fa = ref.compose(emb_a, list(pair.source.ids), k)
    gb = ref.compose(emb_b, list(pair.target.ids), k)
    e_pos = ref.energy(fa, gb)
    out = []
    for ns in noise_sents:
        gn = ref.compose(emb_b, list(ns.ids), k)
        out.append(margin + e_pos - ref.energy(fa, gn))
    return out


def doc_hinges(bundle, doc_pair, noise_docs, sentence_noise, margin, kind) -> list:
    """Document-level and per-sentence hinge values, reference model arithmetic."""
    emb_a = bundle.table("a").matrix
    emb_b = bundle.table("b").matrix
    k = _ref_kind(kind)
    src_ids = [list(s.ids) for s in doc_pair.source.sentences]
    tgt_ids = [list(s.ids) for s in doc_pair.target.sentences]
    da = ref.compose_doc(emb_a, src_ids, k)
    db = ref.compose_doc(emb_b, tgt_ids, k)
    e_pos = ref.energy(da, db)
    out = []
    for nd in noise_docs:
        dn = ref.compose_doc(emb_b, [list(s.ids) for s in nd.sentences], k)
        out.append(margin + e_pos - ref.energy(da, dn))
    for s_src, s_tgt, noise_i in zip(src_ids, tgt_ids, sentence_noise):
        fa = ref.compose(emb_a, s_src, k)
        gb = ref.compose(emb_b, s_tgt, k)
        ep = ref.energy(fa, gb)
        for ns in noise_i:
            gn = ref.compose(emb_b, list(ns.ids), k)
            out.append(margin + ep - ref.energy(fa, gn))
    return out


def random_pair_instance(rng, kind, va=4, vb=5, d=None, k=None, max_tries=200):
    """(bundle, pair, noise, margin) with every hinge at least 1e-3 from its kink."""
    for _ in range(max_tries):
        d_i = d or int(rng.integers(2, 6))
        k_i = k or int(rng.integers(1, 4))
        bundle = make_bundle({"a": va, "b": vb}, d_i, int(rng.integers(1 << 30)), kind)
        pair = ParallelPair(rand_sentence(rng, va), rand_sentence(rng, vb), 0)
        noise = [rand_sentence(rng, vb) for _ in range(k_i)]
        margin = float(rng.uniform(0.5, 3.0))
        if min(abs(h) for h in pair_hinges(bundle, pair, noise, margin, kind)) > 1e-3:
            return bundle, pair, noise, margin
    raise AssertionError("could not draw a kink-free pair instance")


def random_doc_instance(rng, kind, va=4, vb=4, d=3, n_sents=2, k_docs=2, k_sents=2,
                        max_tries=200):
    """(bundle, doc_pair, noise_docs, sentence_noise, margin), kink-guarded."""

    def _doc(lang, v, idx):
        sents = [rand_sentence(rng, v, 3) for _ in range(n_sents)]
        return LabeledDocument(f"{lang}{idx}", lang, set(), sents)

    for _ in range(max_tries):
        bundle = make_bundle({"a": va, "b": vb}, d, int(rng.integers(1 << 30)), kind)
        doc_pair = DocumentPair(_doc("a", va, 0), _doc("b", vb, 0), 0)
        noise_docs = [_doc("b", vb, i + 1) for i in range(k_docs)]
        sentence_noise = [
            [rand_sentence(rng, vb, 3) for _ in range(k_sents)] for _ in range(n_sents)
        ]
        margin = float(rng.uniform(0.5, 3.0))
        hs = doc_hinges(bundle, doc_pair, noise_docs, sentence_noise, margin, kind)
        if min(abs(h) for h in hs) > 1e-3:
            return bundle, doc_pair, noise_docs, sentence_noise, margin
    raise AssertionError("could not draw a kink-free document instance")


# ---------------------------------------------------------------------------
# finite differences

def numerical_grads(loss_fn, bundle, step=1e-5) -> dict:
    """Central finite differences of loss_fn() over every table coordinate."""
    out = {}
    for lang in bundle.languages:
        mat = bundle.table(lang).matrix
        g = np.zeros_like(mat)
        for i in range(mat.shape[0]):
            for j in range(mat.shape[1]):
                orig = mat[i, j]
                mat[i, j] = orig + step
                up = loss_fn()
                mat[i, j] = orig - step
                down = loss_fn()
                mat[i, j] = orig
                g[i, j] = (up - down) / (2.0 * step)
        out[lang] = g
    return out


def densify_grads(grads: dict, bundle) -> dict:
    out = {lang: np.zeros_like(bundle.table(lang).matrix) for lang in bundle.languages}
    for (lang, wid), g in grads.items():
        out[lang][wid] += g
    return out


def max_rel_err(analytic: dict, numeric: dict) -> float:
    worst = 0.0
    for lang, f in numeric.items():
        err = np.abs(analytic[lang] - f) / np.maximum(1.0, np.abs(f))
        worst = max(worst, float(err.max()))
    return worst
