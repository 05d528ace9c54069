import numpy as np
import pytest

from srltools.conll_corpus import parse_sentence, write_corpus
from srltools.srl_encoder import ModelConfig
from srltools.syntax_features import build_tree, rel_path


LABELS = ("SBJ", "OBJ", "COMP", "ADV", "NMOD")
LEXICON = ("中国", "外商", "投资", "农业", "鼓励", "经济", "发展", "政府", "企业", "市场", "技术", "合作")
ROLE_OF_PATH = {"SBJ,": "A0", "OBJ,": "A1", "COMP_COMP,": "A2"}


def row(i, form, head, label, phead=None, plabel=None, pos="NN", sense=None, roles=()):
    phead = head if phead is None else phead
    plabel = label if plabel is None else plabel
    return "\t".join([str(i), form, form, form, pos, pos, "_", "_",
                      str(head), str(phead), label, plabel,
                      "Y" if sense else "_", sense or "_",
                      *[r or "_" for r in roles]])


# The encouragement example: "$ 中国 鼓励 外商 投资 农业", predicate 鼓励.
ENCOURAGEMENT_ROWS = [
    row(1, "$", 0, "ROOT", pos="PU", roles=[None]),
    row(2, "中国", 3, "SBJ", pos="NR", roles=["A0"]),
    row(3, "鼓励", 1, "ROOT", pos="VV", sense="鼓励.01", roles=[None]),
    row(4, "外商", 3, "COMP", roles=["A1"]),
    row(5, "投资", 3, "COMP", pos="VV", roles=["A2"]),
    row(6, "农业", 5, "COMP", roles=[None]),
]

TWO_PREDICATE_ROWS = [
    row(1, "政府", 2, "SBJ", roles=["A0", None]),
    row(2, "鼓励", 0, "ROOT", pos="VV", sense="鼓励.01", roles=[None, None]),
    row(3, "企业", 2, "OBJ", roles=["A1", "A0"]),
    row(4, "发展", 2, "COMP", pos="VV", sense="发展.01", roles=["A2", None]),
    row(5, "技术", 4, "OBJ", roles=[None, "A1"]),
]

# Four gold arcs, five predicted, three of them correct.
SCORER_GOLD_ROWS = [
    row(1, "政府", 2, "SBJ", roles=["A0", None]),
    row(2, "鼓励", 0, "ROOT", pos="VV", sense="鼓励.01", roles=[None, None]),
    row(3, "企业", 2, "OBJ", roles=["A1", "A0"]),
    row(4, "发展", 2, "COMP", pos="VV", sense="发展.01", roles=[None, None]),
    row(5, "技术", 4, "OBJ", roles=[None, "A1"]),
]
SCORER_PRED_ROWS = [
    row(1, "政府", 2, "SBJ", roles=["A0", None]),
    row(2, "鼓励", 0, "ROOT", pos="VV", sense="鼓励.01", roles=[None, None]),
    row(3, "企业", 2, "OBJ", roles=["A1", "A0"]),
    row(4, "发展", 2, "COMP", pos="VV", sense="发展.02", roles=[None, None]),
    row(5, "技术", 4, "OBJ", roles=["A2", "A2"]),
]


def random_heads(rng, n):
    # Each token attaches to an earlier one, so the result is always a tree.
    return [0] + [int(rng.integers(1, i)) for i in range(2, n + 1)]


def corrupt(rng, heads, labels, rate):
    heads, labels = list(heads), list(labels)
    for i in range(2, len(heads) + 1):
        if rng.random() < rate:
            heads[i - 1] = int(rng.integers(1, i))
            labels[i - 1] = str(rng.choice(LABELS))
    return heads, labels


def synthetic_sentence(rng, n, corruption=0.0, unique_forms=None):

    """
    A sentence with a random tree and one predicate whose roles are a
    function of the gold RelPath: SBJ child -> A0, OBJ child -> A1,
    COMP grandchild through COMP -> A2. The predicted tree columns hold a
    copy of the gold tree with `corruption` of its arcs redrawn.
    """

    heads = random_heads(rng, n)
    labels = ["ROOT"] + [str(rng.choice(LABELS)) for _ in range(n - 1)]
    tree = build_tree(heads, labels)
    with_children = [h for h in set(heads) if h != 0]
    pred = int(rng.choice(with_children)) if with_children else 1
    roles = [ROLE_OF_PATH.get(rel_path(tree, pred, c)) for c in range(1, n + 1)]
    pheads, plabels = corrupt(rng, heads, labels, corruption)

    rows = []
    for i in range(1, n + 1):
        form = unique_forms[i - 1] if unique_forms else str(rng.choice(LEXICON))
        rows.append(row(i, form, heads[i - 1], labels[i - 1], pheads[i - 1], plabels[i - 1],
                        pos="VV" if i == pred else "NN",
                        sense=f"{form}.01" if i == pred else None, roles=[roles[i - 1]]))
    return parse_sentence(rows)


def synthetic_corpus(n_sentences, seed=0, corruption=0.0, min_len=4, max_len=9, unique_forms=False):
    rng = np.random.default_rng(seed)
    corpus = []
    for k in range(n_sentences):
        n = int(rng.integers(min_len, max_len + 1))
        forms = [f"s{k}w{i}" for i in range(1, n + 1)] if unique_forms else None
        corpus.append(synthetic_sentence(rng, n, corruption, forms))
    return corpus


def tiny_config(mode="none", representation=(), **overrides):

    """Two blocks of two heads for every mode (d_model = 8, wider with input syntax)."""

    representation = tuple(representation)
    n_input = len(representation) if mode == "input" else 0
    d_model = 8 + 2 * n_input
    values = dict(d_w=2, d_t=2, d_s=2, d_p=4, d_ff=6, n_blocks=2, head_dim=d_model // 2,
                  lisa_layer=2, relawe_layers=1, mode=mode, representation=representation,
                  relpath_min_freq=1)
    values.update(overrides)
    return ModelConfig(**values).validate()


@pytest.fixture
def encouragement():
    return parse_sentence(ENCOURAGEMENT_ROWS)


@pytest.fixture
def two_predicates():
    return parse_sentence(TWO_PREDICATE_ROWS)


def write_rows(path, *blocks):
    path.write_text("".join("\n".join(rows) + "\n\n" for rows in blocks), encoding="utf-8")
    return path


@pytest.fixture
def encouragement_path(tmp_path):
    return write_rows(tmp_path / "encouragement.conll", ENCOURAGEMENT_ROWS)


@pytest.fixture
def scorer_paths(tmp_path):
    return (write_rows(tmp_path / "gold.conll", SCORER_GOLD_ROWS),
            write_rows(tmp_path / "pred.conll", SCORER_PRED_ROWS))


@pytest.fixture
def small_corpus():
    return synthetic_corpus(10, seed=3, unique_forms=True)


@pytest.fixture
def small_corpus_path(tmp_path, small_corpus):
    path = tmp_path / "small.conll"
    write_corpus(path, small_corpus)
    return path
