"""
Train and evaluate the SRL encoder: label-smoothed cross-entropy, Adadelta,
word-budget batching, periodic dev scoring with best-checkpoint selection,
and resumable trainer state.
"""

import logging
import shutil
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from os.path import expanduser
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import yaml
from tqdm import trange

from . import tensor_core as tc
from .common import ConfigError, ShapeMismatch, SrlError, TargetOutOfRange
from .conll_corpus import PredicateInstance, extract_instances, read_corpus, score
from .srl_encoder import ModelConfig, SrlModel, build_vocabs, load_checkpoint, save_checkpoint
from .syntax_features import NO_ROLE, PrunedTree, resolve_trees

logger = logging.getLogger(__name__)

STATE_FILE = "trainer_state.yaml"
SQ_GRAD, SQ_DELTA = "adadelta.sq_grad/", "adadelta.sq_delta/"


def label_smoothed_cross_entropy(logits, targets, eps=0.1):

    """
    Mean over tokens of the cross-entropy against the smoothed target: 1 - eps
    on the gold label and eps / (L - 1) on each of the other L - 1 labels.
    """

    logits = tc.as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    n, L = logits.shape
    if L < 2:
        raise ConfigError(f"label smoothing needs at least two labels, got {L}")
    if targets.shape != (n,):
        raise ShapeMismatch(f"{targets.shape[0] if targets.ndim else 0} targets for logits {logits.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= L):
        raise TargetOutOfRange(f"targets must lie in [0, {L}), found [{targets.min()}, {targets.max()}]")

    smoothed = np.full((n, L), eps / (L - 1))
    smoothed[np.arange(n), targets] = 1.0 - eps
    return tc.scale(tc.sum_all(tc.mul(tc.log_softmax(logits), smoothed)), -1.0 / n)


@dataclass
class AdadeltaState:
    rho: float = 0.95
    eps: float = 1e-6
    lr: float = 1.0
    sq_grad: Dict[str, np.ndarray] = field(default_factory=dict)
    sq_delta: Dict[str, np.ndarray] = field(default_factory=dict)

    def to_arrays(self):
        arrays = {SQ_GRAD + name: a for name, a in self.sq_grad.items()}
        arrays.update({SQ_DELTA + name: a for name, a in self.sq_delta.items()})
        return arrays

    @classmethod
    def from_arrays(cls, arrays, **hyper):
        state = cls(**hyper)
        for key, a in arrays.items():
            if key.startswith(SQ_GRAD):
                state.sq_grad[key[len(SQ_GRAD):]] = a
            elif key.startswith(SQ_DELTA):
                state.sq_delta[key[len(SQ_DELTA):]] = a
        return state


def adadelta_update(params, grads, state):

    """
    One Adadelta step, in place:
        E[g^2]  <- rho E[g^2] + (1 - rho) g^2
        dx      <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
        E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
        x       <- x + lr dx
    Parameters without a gradient are skipped.
    """

    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient of {name} has shape {g.shape}, parameter {p.shape}")

        sq_grad = state.sq_grad.get(name, np.zeros_like(p.data))
        sq_delta = state.sq_delta.get(name, np.zeros_like(p.data))

        sq_grad = state.rho * sq_grad + (1 - state.rho) * g * g
        delta = -np.sqrt(sq_delta + state.eps) / np.sqrt(sq_grad + state.eps) * g
        sq_delta = state.rho * sq_delta + (1 - state.rho) * delta * delta

        state.sq_grad[name] = sq_grad
        state.sq_delta[name] = sq_delta
        p.data += state.lr * delta


@dataclass
class Batch:
    indices: List[int]
    word_count: int

    def __len__(self):
        return len(self.indices)


def make_batches(instances, word_budget=4096, rng=None):

    """
    Shuffle instances with `rng` (input order when None) and pack them
    greedily into batches of at most `word_budget` words, counting each
    instance's sentence length. An instance longer than the budget forms a
    batch on its own.
    """

    if len(instances) == 0:
        raise SrlError("cannot batch an empty instance list")

    order = rng.permutation(len(instances)) if rng is not None else np.arange(len(instances))
    batches, current, words = [], [], 0

    def flush():
        batches.append(Batch(indices=list(current), word_count=words))

    for i in order:
        n = len(instances[i].sentence)
        if current and words + n > word_budget:
            flush()
            current, words = [], 0
        current.append(int(i))
        words += n
    flush()
    return batches


@dataclass
class TrainSchedule:

    """
    Desk-scale defaults; `published_profile()` gives the published regime.
    """

    max_steps: int = 2000
    eval_every: int = 100
    seed: int = 0
    checkpoint: str = "checkpoint"
    word_budget: int = 4096
    log: Optional[str] = None
    workers: int = 1

    def validate(self):
        for name in ("max_steps", "eval_every", "word_budget", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, not {getattr(self, name)}")
        return self

    @classmethod
    def published_profile(cls, **overrides):
        return cls(**{"max_steps": 200000, "word_budget": 4096, **overrides})


@dataclass
class TrainingExample:
    instance: PredicateInstance
    tree: object
    targets: np.ndarray

    @property
    def sentence(self):
        return self.instance.sentence


def build_examples(corpus, trees, role_vocab):

    """One example per (sentence, predicate), with role ids as targets."""

    examples = []
    for s, t in zip(corpus, trees):
        for inst in extract_instances(s):
            targets = []
            for role in inst.roles:
                label = NO_ROLE if role is None else role
                if label not in role_vocab.index:
                    raise TargetOutOfRange(f"role {label!r} is not in the role vocab")
                targets.append(role_vocab.index[label])
            examples.append(TrainingExample(instance=inst, tree=t, targets=np.asarray(targets, dtype=np.int64)))
    return examples


class Trainer:

    """
    Owns the model, the Adadelta state, the rng and the queue of batches left
    in the current epoch. Everything it owns is saved by `save` so that
    `resume` continues bit-identically.
    """

    def __init__(self, model, examples, schedule, rng, optimizer=None):
        self.model = model
        self.examples = examples
        self.schedule = schedule.validate()
        self.rng = rng
        self.optimizer = optimizer or AdadeltaState()
        self.pending = deque()
        self.step_count = 0
        self.best_f1 = -1.0

    def next_batch(self):
        if not self.pending:
            self.pending.extend(b.indices for b in make_batches(self.examples, self.schedule.word_budget, self.rng))
        return self.pending.popleft()

    def zero_grad(self):
        for p in self.model.params.values():
            p.zero_grad()

    def step(self):

        """Forward, backward and update on the next batch; returns its mean loss."""

        indices = self.next_batch()
        self.zero_grad()
        eps = self.model.config.label_smoothing
        losses = []
        for i in indices:
            ex = self.examples[i]
            logits = self.model.forward(ex.sentence, ex.instance.predicate_index, ex.tree,
                                        train_mode=True, rng=self.rng)
            loss = label_smoothed_cross_entropy(logits, ex.targets, eps)
            losses.append(float(loss.data))
            tc.backward(tc.scale(loss, 1.0 / len(indices)))

        grads = {name: p.grad for name, p in self.model.params.items() if p.grad is not None}
        adadelta_update(self.model.params, grads, self.optimizer)
        self.step_count += 1
        return float(np.mean(losses))

    def save(self, directory):
        directory = Path(directory)
        save_checkpoint(directory, self.model, self.optimizer.to_arrays())
        state = {"step": self.step_count,
                 "best_f1": self.best_f1,
                 "pending": [list(b) for b in self.pending],
                 "rng": self.rng.bit_generator.state,
                 "schedule": asdict(self.schedule),
                 "optimizer": {"rho": self.optimizer.rho, "eps": self.optimizer.eps, "lr": self.optimizer.lr}}
        with open(directory / STATE_FILE, "w", encoding="utf-8") as f:
            yaml.safe_dump(state, f)

    @classmethod
    def resume(cls, directory, corpus, trees):
        directory = Path(directory)
        model, extra = load_checkpoint(directory)
        with open(directory / STATE_FILE, "r", encoding="utf-8") as f:
            state = yaml.safe_load(f)

        rng = np.random.default_rng()
        rng.bit_generator.state = state["rng"]
        trainer = cls(model, build_examples(corpus, trees, model.vocabs["role"]),
                      TrainSchedule(**state["schedule"]), rng,
                      AdadeltaState.from_arrays(extra, **state["optimizer"]))
        trainer.step_count = state["step"]
        trainer.best_f1 = state["best_f1"]
        trainer.pending = deque(list(b) for b in state["pending"])
        return trainer

    def run(self, dev=None, dev_trees=None, log=None):

        """
        Step until `max_steps`, writing one `step=<n> loss=<f>` line per step
        and a `dev_P/dev_R/dev_F1` line at every evaluation. The best-dev
        model goes to `schedule.checkpoint`; without a dev corpus the final
        model does. Resumable state is kept under `<checkpoint>/last`.

        Returns:
        --------
        The list of log lines written.
        """

        checkpoint = Path(expanduser(self.schedule.checkpoint))
        lines = []
        log_file = open(expanduser(log), "w", encoding="utf-8") if log else None

        def emit(line):
            lines.append(line)
            logger.debug(line)
            if log_file is not None:
                log_file.write(line + "\n")
                log_file.flush()

        try:
            pbar = trange(self.step_count, self.schedule.max_steps)
            for _ in pbar:
                loss = self.step()
                n = self.step_count
                emit(f"step={n} loss={loss:.6f}")
                pbar.set_description(f"Training, loss {loss:.4f}")

                if n % self.schedule.eval_every == 0 or n == self.schedule.max_steps:
                    if dev is not None:
                        report = evaluate(self.model, dev, dev_trees, workers=self.schedule.workers)
                        emit(f"step={n} loss={loss:.6f} dev_P={report.labeled_precision:.6f} "
                             f"dev_R={report.labeled_recall:.6f} dev_F1={report.labeled_f1:.6f}")
                        if report.labeled_f1 > self.best_f1:
                            self.best_f1 = report.labeled_f1
                            save_checkpoint(checkpoint, self.model)
                            logger.info("step %d: new best dev F1 %.4f, saved to %s", n, self.best_f1, checkpoint)
                    self.save(checkpoint / "last")
        finally:
            if log_file is not None:
                log_file.close()

        if dev is None:
            save_checkpoint(checkpoint, self.model)
        return lines


def predict_corpus(model, corpus, trees, workers=1):

    """
    Fill every sentence's role columns with model predictions. Sentences are
    predicted against the frozen parameters, `workers` at a time; the
    returned list keeps corpus order.
    """

    def predict_one(pair):
        s, t = pair
        return model.predict(s, t)

    if trees is None:
        trees = [None] * len(corpus)
    with tc.no_grad():
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(predict_one, zip(corpus, trees)))
        return [predict_one(pair) for pair in zip(corpus, trees)]


def evaluate(model, corpus, trees, exclude_pred_sense=True, workers=1):
    predicted = predict_corpus(model, corpus, trees, workers)
    return score(corpus, predicted, exclude_pred_sense)


def check_tree_source(model_config, source):
    if source == "autodel" and any(r in ("deppath", "relpath") for r in model_config.representation):
        raise ConfigError("DepPath/RelPath cannot be computed on AutoDel trees")


def train(corpus, model_config, schedule, trees, dev=None, dev_trees=None, log=None):

    """
    Build vocabularies from the training corpus and trees, initialise a model
    from `schedule.seed` and run the schedule.

    Returns:
    --------
    (Trainer, list of log lines).
    """

    model_config.validate()
    schedule.validate()
    if any(isinstance(t, PrunedTree) for t in trees):
        check_tree_source(model_config, "autodel")

    rng = np.random.default_rng(schedule.seed)
    vocabs = build_vocabs(corpus, trees, model_config)
    model = SrlModel.create(model_config, vocabs, rng)
    trainer = Trainer(model, build_examples(corpus, trees, vocabs["role"]), schedule, rng)
    logger.info("training %d instances, %d parameters, mode %s", len(trainer.examples),
                sum(p.data.size for p in model.params.values()), model_config.mode)
    return trainer, trainer.run(dev, dev_trees, log)


# Formatted for click; config is a dict loaded from yaml:
def main(config):

    train_config = config["train"]
    model_config = ModelConfig.from_dict(config.get("model", {})).validate()
    source = train_config.get("trees") or "gold"
    check_tree_source(model_config, source)

    schedule = TrainSchedule(max_steps=train_config.get("max_steps", 2000),
                             eval_every=train_config.get("eval_every", 100),
                             seed=train_config.get("seed", 0),
                             checkpoint=train_config.get("checkpoint", "checkpoint"),
                             word_budget=train_config.get("word_budget", 4096),
                             log=train_config.get("log"),
                             workers=train_config.get("workers", 1)).validate()

    train_path = expanduser(train_config["train"])
    dev_path = train_config.get("dev")
    for path in filter(None, (train_path, dev_path)):
        if not Path(expanduser(path)).is_file():
            raise SrlError(f"{path} is not a file.")

    corpus = read_corpus(train_path)
    trees = resolve_trees(corpus, source)
    dev, dev_trees = None, None
    if dev_path:
        dev = read_corpus(expanduser(dev_path))
        dev_source = train_config.get("dev_trees") or (source if source in ("gold", "pred", "autodel") else "pred")
        dev_trees = resolve_trees(dev, dev_source)

    checkpoint = Path(expanduser(schedule.checkpoint))
    created = not checkpoint.exists()
    try:
        trainer, lines = train(corpus, model_config, schedule, trees, dev, dev_trees, schedule.log)
    except BaseException:
        if created and checkpoint.exists():
            shutil.rmtree(checkpoint)
        raise

    logger.info("finished %d steps; checkpoint in %s", trainer.step_count, checkpoint)
    return trainer
