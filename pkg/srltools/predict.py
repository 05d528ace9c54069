"""
Label a CoNLL-2009 corpus with a trained checkpoint.
"""

import logging
from os.path import expanduser
from pathlib import Path

from tqdm import tqdm

from .common import ConfigError, SrlError
from .conll_corpus import read_corpus, write_corpus
from .srl_encoder import load_checkpoint
from .syntax_features import resolve_trees
from .training import check_tree_source, predict_corpus

logger = logging.getLogger(__name__)


def needs_trees(model_config):
    return model_config.mode != "none"


def predict_file(checkpoint, corpus_path, out, trees_source=None, workers=1, chunk=64):

    """
    Predict every predicate's roles in `corpus_path` and write the labelled
    corpus to `out`. Returns the predicted sentences.
    """

    model, _ = load_checkpoint(expanduser(checkpoint))
    if needs_trees(model.config) and not trees_source:
        raise ConfigError(f"a checkpoint trained with mode {model.config.mode!r} needs a tree source")
    if trees_source:
        check_tree_source(model.config, trees_source)

    corpus = read_corpus(corpus_path)
    trees = resolve_trees(corpus, trees_source) if trees_source else [None] * len(corpus)

    predicted = []
    pbar = tqdm(range(0, len(corpus), chunk), disable=len(corpus) == 0)
    for start in pbar:
        predicted.extend(predict_corpus(model, corpus[start:start + chunk], trees[start:start + chunk], workers))
        pbar.set_description(f"Predicting sentences {start} to {min(start + chunk, len(corpus))}")

    write_corpus(out, predicted)
    logger.info("wrote %d predicted sentences to %s", len(predicted), out)
    return predicted


# Formatted for click; config is a dict loaded from yaml:
def main(config):

    checkpoint = expanduser(config["predict"]["model"])
    corpus_path = expanduser(config["predict"]["corpus"])
    out = expanduser(config["predict"]["out"])
    trees_source = config["predict"].get("trees")
    workers = config["predict"].get("workers", 1)

    if not Path(checkpoint).is_dir():
        raise SrlError(f"{checkpoint} is not a checkpoint directory.")
    if not Path(corpus_path).is_file():
        raise SrlError(f"{corpus_path} is not a file.")

    return predict_file(checkpoint, corpus_path, out, trees_source, workers)
