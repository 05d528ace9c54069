"""
Dependency trees and the syntactic representations derived from them:
Dep (head word), Rel (arc label), DepPath and RelPath between a predicate and
a candidate argument, the one-hot head matrix used by the replaced LISA head,
AutoDel pruning and string vocabularies.

Token indices are the 1-based CoNLL ids; 0 is the virtual root.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from os.path import expanduser
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .common import CyclicTree, IndexOutOfRange, LengthMismatch, SrlError
from .conll_corpus import ABSENT, read_corpus

logger = logging.getLogger(__name__)

ROOT = 0
ROOT_WORD = "<ROOT>"
PAD, UNK = "<PAD>", "<UNK>"
NO_ROLE = "_"
SYNTAX_KINDS = ("dep-word", "rel-label", "dep-path", "rel-path")
TOKEN_KINDS = ("word", "pos", "role")
TREE_SOURCES = ("gold", "pred", "autodel")


@dataclass(frozen=True)
class DependencyTree:
    heads: Tuple[int, ...]
    labels: Tuple[str, ...]

    def __len__(self):
        return len(self.heads)

    def head(self, i):
        return self.heads[i - 1]

    def label(self, i):
        return self.labels[i - 1]


@dataclass(frozen=True)
class PrunedTree:
    heads: Tuple[Optional[int], ...]
    labels: Tuple[Optional[str], ...]

    def __len__(self):
        return len(self.heads)

    def head(self, i):
        return self.heads[i - 1]

    def label(self, i):
        return self.labels[i - 1]

    @property
    def n_absent(self):
        return sum(1 for h in self.heads if h is None)


@dataclass(frozen=True)
class PathFeature:
    dep_path: str
    rel_path: str


@dataclass
class Vocab:

    """
    A deterministic string vocabulary. Reserved strings take the first ids;
    the rest are ordered by (frequency desc, string asc).
    """

    kind: str
    index: Dict[str, int]
    freqs: Dict[str, int] = field(default_factory=dict)
    reserved: Tuple[str, ...] = (PAD, UNK)

    def __len__(self):
        return len(self.index)

    @property
    def unk_id(self):
        return self.index.get(UNK)

    @property
    def strings(self):
        return sorted(self.index, key=self.index.get)

    def lookup(self, s):
        if s in self.index:
            return self.index[s]
        if self.unk_id is None:
            raise KeyError(f"{s!r} is not in the {self.kind} vocab and it has no UNK entry")
        return self.unk_id

    def freq(self, s):
        return self.freqs.get(s, 0)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"#kind\t{self.kind}\t{len(self.reserved)}\n")
            for s in self.strings:
                f.write(f"{s}\t{self.index[s]}\t{self.freq(s)}\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            lines = [line.rstrip("\n") for line in f if line.strip()]
        _, kind, n_reserved = lines[0].split("\t")
        index, freqs = {}, {}
        for line in lines[1:]:
            s, i, c = line.rsplit("\t", 2)
            index[s] = int(i)
            freqs[s] = int(c)
        reserved = tuple(sorted(index, key=index.get)[:int(n_reserved)])
        return cls(kind=kind, index=index, freqs=freqs, reserved=reserved)

    @classmethod
    def from_counts(cls, kind, counts, min_freq=1, reserved=(PAD, UNK)):
        kept = sorted(((s, c) for s, c in counts.items() if c >= min_freq and s not in reserved),
                      key=lambda item: (-item[1], item[0]))
        index = {s: i for i, s in enumerate(reserved)}
        freqs = {s: 0 for s in reserved}
        for s, c in kept:
            index[s] = len(index)
            freqs[s] = c
        return cls(kind=kind, index=index, freqs=freqs, reserved=tuple(reserved))


# The four syntax kinds share the general vocabulary type:
SyntaxVocab = Vocab


def build_tree(heads, labels):

    """
    Validate head/label arrays and build a DependencyTree.

    Parameters:
    -----------
    heads (sequence of int): Parent id per token, 0 for the virtual root.
    labels (sequence of str): Arc label per token.

    Returns:
    --------
    A DependencyTree. Raises CyclicTree if some token never reaches the root.
    """

    heads, labels = tuple(int(h) for h in heads), tuple(labels)
    n = len(heads)
    if len(labels) != n:
        raise LengthMismatch(f"{n} heads but {len(labels)} labels")

    for i, h in enumerate(heads, start=1):
        if not 0 <= h <= n:
            raise IndexOutOfRange(f"head {h} of token {i} outside [0, {n}]")

    # 0 = unvisited, 1 = on the current walk, 2 = known to reach the root
    state = [0] * (n + 1)
    state[ROOT] = 2
    for start in range(1, n + 1):
        walk, node = [], start
        while state[node] == 0:
            state[node] = 1
            walk.append(node)
            node = heads[node - 1]
        if state[node] == 1:
            raise CyclicTree(f"cycle through token {node}")
        for visited in walk:
            state[visited] = 2

    return DependencyTree(heads=heads, labels=labels)


def _check_index(t, i):
    if not 1 <= i <= len(t):
        raise IndexOutOfRange(f"token {i} outside [1, {len(t)}]")


def root_path(t, x):

    """[x, head(x), ..., 0] for a token x of a complete tree."""

    _check_index(t, x)
    path = [x]
    while path[-1] != ROOT:
        path.append(t.head(path[-1]))
    return path


def depth(t, x):
    return 0 if x == ROOT else len(root_path(t, x)) - 1


def lca(t, a, b):

    """Lowest common ancestor of tokens a and b; may be the virtual root (0)."""

    on_a = set(root_path(t, a))
    for node in root_path(t, b):
        if node in on_a:
            return node
    return ROOT


def _labels_below(t, ancestor, x):
    # Labels on the path ancestor -> x, read top-down.
    labels = []
    while x != ancestor:
        labels.append(t.label(x))
        x = t.head(x)
    return labels[::-1]


def dep_path(t, predicate, candidate):

    """
    "<ancestor->candidate distance>,<ancestor->predicate distance>".
    """

    ancestor = lca(t, predicate, candidate)
    d_anc = depth(t, ancestor)
    return f"{depth(t, candidate) - d_anc},{depth(t, predicate) - d_anc}"


def rel_path(t, predicate, candidate):

    """
    "<labels ancestor->candidate>,<labels ancestor->predicate>", labels joined
    by "_"; a side is empty when its sub-path is empty.
    """

    ancestor = lca(t, predicate, candidate)
    return (f"{'_'.join(_labels_below(t, ancestor, candidate))},"
            f"{'_'.join(_labels_below(t, ancestor, predicate))}")


def path_feature(t, predicate, candidate):
    return PathFeature(dep_path=dep_path(t, predicate, candidate),
                       rel_path=rel_path(t, predicate, candidate))


def path_distance(feature):
    up, down = feature.dep_path.split(",")
    return int(up) + int(down)


def filter_rel_path(feature, vocab, max_dist=4, min_freq=10):

    """
    Map a RelPath to its vocab id, or to UNK when the predicate and candidate
    are more than `max_dist` arcs apart or the path was seen fewer than
    `min_freq` times in training.
    """

    if path_distance(feature) > max_dist:
        return vocab.unk_id
    if vocab.freq(feature.rel_path) < min_freq:
        return vocab.unk_id
    return vocab.lookup(feature.rel_path)


def prune_erroneous_arcs(auto, gold):

    """
    AutoDel: keep an automatic (head, label) slot only where it matches gold.
    Erroneous slots become absent; nothing replaces them.
    """

    if len(auto) != len(gold):
        raise LengthMismatch(f"automatic tree has {len(auto)} tokens, gold tree has {len(gold)}")

    heads, labels = [], []
    for ah, al, gh, gl in zip(auto.heads, auto.labels, gold.heads, gold.labels):
        keep = ah == gh and al == gl
        heads.append(ah if keep else None)
        labels.append(al if keep else None)
    return PrunedTree(heads=tuple(heads), labels=tuple(labels))


def one_hot_head_matrix(t, n=None):

    """
    n x n matrix whose row i has a single 1 at the column of head(i).
    Root-attached (and pruned) tokens put their 1 on the diagonal.
    """

    n = len(t) if n is None else n
    if n != len(t):
        raise LengthMismatch(f"matrix size {n} for a tree of {len(t)} tokens")

    m = np.zeros((n, n))
    for i in range(1, n + 1):
        h = t.head(i)
        col = i if h is None or h == ROOT else h
        m[i - 1, col - 1] = 1.0
    return m


def head_words(sentence, t):

    """Dep representation: the head word form per token (None where pruned)."""

    words = []
    for i in range(1, len(t) + 1):
        h = t.head(i)
        if h is None:
            words.append(None)
        elif h == ROOT:
            words.append(ROOT_WORD)
        else:
            words.append(sentence.tokens[h - 1].form)
    return words


def select_tree(sentence, source, external=None):

    """
    Resolve a tree source for one sentence.

    Parameters:
    -----------
    sentence (Sentence): The sentence.
    source (str): "gold" (HEAD/DEPREL), "pred" (PHEAD/PDEPREL), "autodel"
        (predicted slots that disagree with gold removed), or "external".
    external (Sentence or None): The aligned sentence of an external CoNLL-2009
        file whose PHEAD/PDEPREL columns hold the tree; required for "external".

    Returns:
    --------
    A DependencyTree, or a PrunedTree for "autodel".
    """

    if source == "gold":
        return build_tree(_require(sentence.heads("gold"), "HEAD"), sentence.labels("gold"))
    if source == "pred":
        return build_tree(_require(sentence.heads("predicted"), "PHEAD"), sentence.labels("predicted"))
    if source == "autodel":
        return prune_erroneous_arcs(select_tree(sentence, "pred"), select_tree(sentence, "gold"))
    if source == "external":
        if external is None:
            raise SrlError("the external tree source needs an aligned sentence")
        if len(external) != len(sentence):
            raise LengthMismatch(f"external tree has {len(external)} tokens, sentence has {len(sentence)}")
        return select_tree(external, "pred")
    raise SrlError(f"unknown tree source {source!r}")


def _require(heads, column):
    if any(h is None for h in heads):
        raise SrlError(f"the {column} column is absent for some tokens")
    return heads


def load_external_trees(path, corpus):
    external = read_corpus(path)
    if len(external) != len(corpus):
        raise LengthMismatch(f"{path} has {len(external)} sentences, corpus has {len(corpus)}")
    return external


def resolve_trees(corpus, source, external_path=None):

    """
    Trees for a whole corpus. `source` is "gold", "pred", "autodel" or a path
    to an external CoNLL-2009 file.
    """

    if source in TREE_SOURCES:
        return [select_tree(s, source) for s in corpus]
    external = load_external_trees(expanduser(external_path or source), corpus)
    return [select_tree(s, "external", e) for s, e in zip(corpus, external)]


def _collect(corpus, trees, kind):
    counts = Counter()
    for s, t in zip(corpus, trees):
        if kind == "dep-word":
            counts.update(w for w in head_words(s, t) if w is not None)
        elif kind == "rel-label":
            counts.update(label for label in t.labels if label is not None)
        elif kind in ("dep-path", "rel-path"):
            if isinstance(t, PrunedTree):
                raise SrlError("path features are undefined on AutoDel trees")
            for pred in s.predicates:
                for cand in range(1, len(s) + 1):
                    feat = path_feature(t, pred, cand)
                    counts[feat.dep_path if kind == "dep-path" else feat.rel_path] += 1
        else:
            raise SrlError(f"unknown syntax vocab kind {kind!r}")
    return counts


def build_syntax_vocab(corpus, kind, min_freq=1, trees=None):

    """
    Build a syntax vocabulary from a (training) corpus.

    Parameters:
    -----------
    corpus (list of Sentence): Parsed corpus.
    kind (str): One of "dep-word", "rel-label", "dep-path", "rel-path".
    min_freq (int): Entries seen fewer times are dropped.
    trees (list or None): Trees to read; gold trees when None.

    Returns:
    --------
    A SyntaxVocab with PAD and UNK at ids 0 and 1.
    """

    if trees is None:
        trees = [select_tree(s, "gold") for s in corpus]
    return SyntaxVocab.from_counts(kind, _collect(corpus, trees, kind), min_freq)


def dump_path_features(corpus, trees):

    """
    Yield one tab-separated record per (sentence, predicate, token):
    sentence index, predicate id, token id, form, DepPath, RelPath, Dep, Rel.
    """

    for i, (s, t) in enumerate(zip(corpus, trees)):
        words = head_words(s, t)
        for pred in s.predicates:
            for cand in range(1, len(s) + 1):
                if isinstance(t, PrunedTree):
                    feat = PathFeature(ABSENT, ABSENT)
                else:
                    feat = path_feature(t, pred, cand)
                dep = words[cand - 1] or ABSENT
                rel = t.label(cand) or ABSENT
                yield "\t".join([str(i), str(pred), str(cand), s.tokens[cand - 1].form,
                                 feat.dep_path, feat.rel_path, dep, rel])


# Formatted for click; config is a dict loaded from yaml:
def main(config):

    corpus_path = expanduser(config["paths"]["corpus"])
    trees_source = config["paths"]["trees"]
    out = expanduser(config["paths"]["out"])

    if not Path(corpus_path).is_file():
        raise SrlError(f"{corpus_path} is not a file.")

    corpus = read_corpus(corpus_path)
    trees = resolve_trees(corpus, trees_source)

    n_records = 0
    with open(out, "w", encoding="utf-8") as f:
        pbar = tqdm(dump_path_features(corpus, trees), disable=len(corpus) == 0)
        for record in pbar:
            f.write(record + "\n")
            n_records += 1
            pbar.set_description(f"Writing path features for {len(corpus)} sentences")

    logger.info("wrote %d path records to %s", n_records, out)
    return n_records
