"""
Dump the attention weights of one head for one (sentence, predicate)
instance, as aligned text and optionally as a tab-separated file that
re-parses to the exact weights.
"""

import logging
from os.path import expanduser
from pathlib import Path

import click
import numpy as np

from . import tensor_core as tc
from .common import IndexOutOfRange, SrlError
from .conll_corpus import read_corpus
from .srl_encoder import load_checkpoint
from .syntax_features import resolve_trees

logger = logging.getLogger(__name__)


def attention_weights(model, sentence, predicate_index, tree, layer, head):

    """
    The n x n weight matrix of `head` (0-based) in block `layer` (1-based),
    from an eval-mode forward.
    """

    config = model.config
    if not 1 <= layer <= config.n_blocks:
        raise IndexOutOfRange(f"layer {layer} outside [1, {config.n_blocks}]")
    if not 0 <= head < config.n_heads:
        raise IndexOutOfRange(f"head {head} outside [0, {config.n_heads - 1}]")
    if predicate_index not in sentence.predicates:
        raise IndexOutOfRange(f"token {predicate_index} is not a predicate; "
                              f"predicates are {list(sentence.predicates)}")

    trace = []
    with tc.no_grad():
        model.forward(sentence, predicate_index, tree, trace=trace)
    for traced_layer, traced_head, weights in trace:
        if (traced_layer, traced_head) == (layer, head):
            return weights
    raise IndexOutOfRange(f"no weights recorded for layer {layer}, head {head}")


def format_weights(weights, forms, decimals=3):

    """Aligned text: a header of token forms, then one row per token."""

    width = max([decimals + 3] + [len(f) for f in forms])
    lines = [" " * width + " " + " ".join(f.rjust(width) for f in forms)]
    for form, row in zip(forms, weights):
        lines.append(form.rjust(width) + " " + " ".join(f"{v:{width}.{decimals}f}" for v in row))
    return "\n".join(lines)


def write_weights(path, weights, forms):
    with open(path, "w", encoding="utf-8") as f:
        f.write("\t".join(["#"] + list(forms)) + "\n")
        for form, row in zip(forms, weights):
            f.write("\t".join([form] + [repr(float(v)) for v in row]) + "\n")


def read_weights(path):

    """Returns (forms, weights) from a file written by `write_weights`."""

    with open(path, "r", encoding="utf-8") as f:
        rows = [line.rstrip("\n").split("\t") for line in f if line.strip()]
    forms = rows[0][1:]
    weights = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    return forms, weights


# Formatted for click; config is a dict loaded from yaml:
def main(config):

    checkpoint = expanduser(config["inspect"]["model"])
    corpus_path = expanduser(config["inspect"]["corpus"])
    sentence_id = config["inspect"].get("sentence", 0)
    layer = config["inspect"]["layer"]
    head = config["inspect"]["head"]
    predicate = config["inspect"].get("predicate")
    trees_source = config["inspect"].get("trees")
    out = config["inspect"].get("out")

    if not Path(corpus_path).is_file():
        raise SrlError(f"{corpus_path} is not a file.")

    model, _ = load_checkpoint(checkpoint)
    corpus = read_corpus(corpus_path)
    if not 0 <= sentence_id < len(corpus):
        raise IndexOutOfRange(f"sentence {sentence_id} outside [0, {len(corpus) - 1}]")

    sentence = corpus[sentence_id]
    if predicate is None:
        if not sentence.predicates:
            raise IndexOutOfRange(f"sentence {sentence_id} has no predicate")
        predicate = sentence.predicates[0]

    tree = None
    if trees_source:
        tree = resolve_trees([sentence], trees_source)[0] if trees_source in ("gold", "pred", "autodel") \
            else resolve_trees(corpus, trees_source)[sentence_id]

    weights = attention_weights(model, sentence, predicate, tree, layer, head)
    click.echo(f"sentence {sentence_id}, predicate {predicate}, layer {layer}, head {head}")
    click.echo(format_weights(weights, sentence.forms))

    if out:
        write_weights(expanduser(out), weights, sentence.forms)
        logger.info("wrote weights to %s", out)

    return weights
