"""
Self-attention SRL encoder with three ways of bringing syntax in:

    input   syntax embeddings concatenated to the token input
    lisa    one head of block `lisa_layer` replaced by the one-hot head matrix,
            with relation embeddings concatenated to its values
    relawe  dependency and relation embeddings added to Q and V of every head
            in the first `relawe_layers` blocks

Each block runs FFN before multi-head attention, each sub-layer wrapped in a
residual connection and layer norm. One forward handles one
(sentence, predicate) instance.
"""

import logging
from collections import Counter, OrderedDict
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import tensor_core as tc
from .common import ConfigError, NonFiniteLogits, OddWidth, ShapeMismatch, VocabMismatch
from .conll_corpus import ABSENT
from .syntax_features import (NO_ROLE, TOKEN_KINDS, PrunedTree, Vocab, build_syntax_vocab,
                              filter_rel_path, head_words, one_hot_head_matrix, path_feature)

logger = logging.getLogger(__name__)

MODES = ("none", "input", "lisa", "relawe")
REPRS = ("dep", "rel", "deppath", "relpath")
REPR_KIND = {"dep": "dep-word", "rel": "rel-label", "deppath": "dep-path", "relpath": "rel-path"}
DEP_SIDE = ("dep", "deppath")
REL_SIDE = ("rel", "relpath")


@dataclass
class ModelConfig:

    """
    Every hyperparameter of the encoder. Defaults are the published values;
    `d_s` (size of each syntax embedding) is not published and is a choice.
    """

    d_w: int = 100
    d_t: int = 50
    d_p: int = 100
    d_s: int = 50
    d_ff: int = 800
    n_blocks: int = 10
    head_dim: int = 25
    lisa_layer: int = 5
    relawe_layers: int = 5
    dropout_attn: float = 0.2
    dropout_res: float = 0.3
    dropout_ffn: float = 0.2
    label_smoothing: float = 0.1
    mode: str = "none"
    representation: Tuple[str, ...] = ()
    relpath_max_dist: int = 4
    relpath_min_freq: int = 10
    ffn_first: bool = True
    layer_norm_eps: float = 1e-6
    precision: int = 64

    def __post_init__(self):
        # Canonical order so that repeated flags and YAML lists compare equal.
        self.representation = tuple(r for r in REPRS if r in set(self.representation))

    @property
    def embedded_reprs(self):
        if self.mode == "none":
            return ()
        if self.mode == "lisa":
            return tuple(r for r in self.representation if r in REL_SIDE)
        return self.representation

    @property
    def d_f(self):
        extra = self.d_s * len(self.representation) if self.mode == "input" else 0
        return self.d_w + self.d_t + extra

    @property
    def d_model(self):
        return self.d_f + self.d_p

    @property
    def n_heads(self):
        return self.d_model // self.head_dim

    @property
    def rel_dim(self):
        return self.d_s * len(self.embedded_reprs) if self.mode == "lisa" else 0

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, not {self.mode!r}")
        unknown = set(self.representation) - set(REPRS)
        if unknown:
            raise ConfigError(f"unknown representation(s) {sorted(unknown)}")
        if self.mode in ("input", "relawe") and not self.representation:
            raise ConfigError(f"mode {self.mode!r} needs at least one representation")
        if self.mode == "lisa" and "deppath" in self.representation:
            raise ConfigError("the replaced LISA head copies heads, it cannot use DepPath")
        if self.d_model % 2 != 0:
            raise ConfigError(f"d_model = {self.d_model} must be even for the positional encoding")
        if self.d_model % self.head_dim != 0:
            raise ConfigError(f"d_model = {self.d_model} is not divisible by head_dim = {self.head_dim}")
        if not 1 <= self.lisa_layer <= self.n_blocks:
            raise ConfigError(f"lisa_layer {self.lisa_layer} outside [1, {self.n_blocks}]")
        if not 0 <= self.relawe_layers <= self.n_blocks:
            raise ConfigError(f"relawe_layers {self.relawe_layers} outside [0, {self.n_blocks}]")
        for name in ("dropout_attn", "dropout_res", "dropout_ffn", "label_smoothing"):
            if not 0 <= getattr(self, name) < 1:
                raise ConfigError(f"{name} = {getattr(self, name)} outside [0, 1)")
        if self.precision not in (32, 64):
            raise ConfigError(f"precision must be 32 or 64, not {self.precision}")
        return self

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config key(s) {sorted(unknown)}")
        d = dict(d)
        if "representation" in d:
            rep = d["representation"] or ()
            d["representation"] = tuple(rep.split(",")) if isinstance(rep, str) else tuple(rep)
        return cls(**d)

    def to_lines(self):
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, tuple):
                value = ",".join(value)
            lines.append(f"{key}={value}")
        return lines

    @classmethod
    def from_lines(cls, lines):
        types = {f.name: f.type for f in fields(cls)}
        d = {}
        for line in lines:
            line = line.strip()
            if not line or "=" not in line:
                continue
            key, value = line.split("=", 1)
            if key not in types:
                continue
            default = getattr(cls, key, None)
            if key == "representation":
                d[key] = tuple(r for r in value.split(",") if r)
            elif isinstance(default, bool):
                d[key] = value == "true"
            elif isinstance(default, int):
                d[key] = int(value)
            elif isinstance(default, float):
                d[key] = float(value)
            else:
                d[key] = value
        return cls(**d)


@dataclass
class HeadParams:
    WV: tc.Tensor
    bV: tc.Tensor
    WQ: Optional[tc.Tensor] = None
    bQ: Optional[tc.Tensor] = None
    WK: Optional[tc.Tensor] = None


@dataclass
class LayerParams:
    W1: tc.Tensor
    b1: tc.Tensor
    W2: tc.Tensor
    b2: tc.Tensor
    heads: List[HeadParams]
    WO: tc.Tensor
    ln1_gain: tc.Tensor
    ln1_bias: tc.Tensor
    ln2_gain: tc.Tensor
    ln2_bias: tc.Tensor
    WO_rel: Optional[tc.Tensor] = None
    relawe: Dict[str, tc.Tensor] = field(default_factory=dict)

    @classmethod
    def of(cls, params, layer, config):

        """A typed view over the flat parameter dict for one block (1-based)."""

        pre = f"block{layer}."
        heads = []
        for h in range(config.n_heads):
            hp = f"{pre}head{h}."
            heads.append(HeadParams(WV=params[hp + "WV"], bV=params[hp + "bV"],
                                    WQ=params.get(hp + "WQ"), bQ=params.get(hp + "bQ"),
                                    WK=params.get(hp + "WK")))
        relawe = {r: params[f"{pre}relawe.{r}"] for r in REPRS if f"{pre}relawe.{r}" in params}
        return cls(W1=params[pre + "ffn.W1"], b1=params[pre + "ffn.b1"],
                   W2=params[pre + "ffn.W2"], b2=params[pre + "ffn.b2"],
                   heads=heads, WO=params[pre + "WO"],
                   ln1_gain=params[pre + "ln1.gain"], ln1_bias=params[pre + "ln1.bias"],
                   ln2_gain=params[pre + "ln2.gain"], ln2_bias=params[pre + "ln2.bias"],
                   WO_rel=params.get(pre + "WO_rel"), relawe=relawe)


@dataclass
class EncodedInput:
    embedded: tc.Tensor
    predicate_index: int
    ids: Dict[str, np.ndarray]
    syntax_embedded: Dict[str, tc.Tensor]
    head_matrix: Optional[np.ndarray] = None


def init_params(config, vocab_sizes, rng):

    """
    Initialise every parameter of the model as a named, tracked Tensor.

    Parameters:
    -----------
    config (ModelConfig): Validated configuration.
    vocab_sizes (dict): Sizes of the "word", "pos", "role" vocabs and of the
        syntax vocab kinds of the embedded representations.
    rng (numpy Generator): Source of all random draws.

    Returns:
    --------
    An OrderedDict mapping names to Tensors. Parameters shared by every mode
    are drawn first, so configs differing only in mode share them for a seed.
    """

    params = OrderedDict()
    d, hd = config.d_model, config.head_dim

    def embedding(name, rows, width):
        # Gaussian with variance 1/sqrt(width).
        params[name] = tc.Tensor(rng.normal(0.0, width ** -0.25, size=(rows, width)), True, name)

    def glorot(name, fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = tc.Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), True, name)

    def const(name, width, value):
        params[name] = tc.Tensor(np.full(width, value), True, name)

    embedding("embed.word", vocab_sizes["word"], config.d_w)
    embedding("embed.pos", vocab_sizes["pos"], config.d_t)
    embedding("embed.pred", 2, config.d_p)

    for layer in range(1, config.n_blocks + 1):
        pre = f"block{layer}."
        glorot(pre + "ffn.W1", d, config.d_ff)
        const(pre + "ffn.b1", config.d_ff, 0.0)
        glorot(pre + "ffn.W2", config.d_ff, d)
        const(pre + "ffn.b2", d, 0.0)
        for h in range(config.n_heads):
            hp = f"{pre}head{h}."
            if not _is_lisa_head(config, layer, h):
                glorot(hp + "WQ", d, hd)
                const(hp + "bQ", hd, 0.0)
                # No key bias: softmax is invariant to it.
                glorot(hp + "WK", d, hd)
            glorot(hp + "WV", d, hd)
            const(hp + "bV", hd, 0.0)
        glorot(pre + "WO", config.n_heads * hd, d)
        const(pre + "ln1.gain", d, 1.0)
        const(pre + "ln1.bias", d, 0.0)
        const(pre + "ln2.gain", d, 1.0)
        const(pre + "ln2.bias", d, 0.0)

    glorot("out.W", d, vocab_sizes["role"])
    const("out.b", vocab_sizes["role"], 0.0)

    for r in config.embedded_reprs:
        embedding(f"syntax.{r}", vocab_sizes[REPR_KIND[r]], config.d_s)

    if config.mode == "relawe":
        for layer in range(1, config.relawe_layers + 1):
            for r in config.embedded_reprs:
                glorot(f"block{layer}.relawe.{r}", config.d_s, hd)

    if config.mode == "lisa" and config.rel_dim > 0:
        glorot(f"block{config.lisa_layer}.WO_rel", config.rel_dim, d)

    return params


def _is_lisa_head(config, layer, h):
    return config.mode == "lisa" and layer == config.lisa_layer and h == config.n_heads - 1


def sinusoidal_positions(n, d):

    """PE(t, 2i) = sin(t / 10000^(2i/d)), PE(t, 2i+1) = cos(t / 10000^(2i/d))."""

    if d % 2 != 0:
        raise OddWidth(f"positional width {d} is odd")
    t = np.arange(n)[:, None]
    rates = 10000.0 ** (np.arange(0, d, 2) / d)
    pe = np.zeros((n, d))
    pe[:, 0::2] = np.sin(t / rates)
    pe[:, 1::2] = np.cos(t / rates)
    return pe


def syntax_ids(sentence, predicate_index, tree, config, vocabs):

    """Vocab ids of every selected representation, one per token."""

    ids = {}
    n = len(sentence)
    for r in config.representation:
        vocab = vocabs[REPR_KIND[r]]
        if r == "dep":
            ids[r] = [vocab.lookup(w) if w is not None else vocab.unk_id for w in head_words(sentence, tree)]
        elif r == "rel":
            ids[r] = [vocab.lookup(label) if label is not None else vocab.unk_id for label in tree.labels]
        else:
            if isinstance(tree, PrunedTree):
                raise ConfigError("DepPath/RelPath cannot be computed on AutoDel trees")
            feats = [path_feature(tree, predicate_index, c) for c in range(1, n + 1)]
            if r == "deppath":
                ids[r] = [vocab.lookup(f.dep_path) for f in feats]
            else:
                ids[r] = [filter_rel_path(f, vocab, config.relpath_max_dist, config.relpath_min_freq)
                          for f in feats]
        ids[r] = np.asarray(ids[r], dtype=np.int64)
    return ids


def build_input(sentence, predicate_index, tree, config, vocabs, params):

    """
    Input layer: word ⊕ POS ⊕ predicate indicator (⊕ syntax embeddings in
    input mode), plus sinusoidal positions added on top.

    Returns:
    --------
    An EncodedInput holding the n x d_model input, every syntax id array and
    the one-hot head matrix.
    """

    n = len(sentence)
    word_ids = [vocabs["word"].lookup(tok.form) for tok in sentence.tokens]
    pos_ids = [vocabs["pos"].lookup(tok.ppos or tok.pos or ABSENT) for tok in sentence.tokens]
    pred_ids = [1 if tok.id == predicate_index else 0 for tok in sentence.tokens]

    if tree is None and config.embedded_reprs:
        raise ConfigError(f"mode {config.mode!r} needs a dependency tree")
    if tree is None and config.mode == "lisa":
        raise ConfigError("mode 'lisa' needs a dependency tree")
    ids = syntax_ids(sentence, predicate_index, tree, config, vocabs) if tree is not None else {}
    syntax_embedded = {r: tc.embedding_lookup(params[f"syntax.{r}"], ids[r]) for r in config.embedded_reprs}

    parts = [tc.embedding_lookup(params["embed.word"], word_ids),
             tc.embedding_lookup(params["embed.pos"], pos_ids),
             tc.embedding_lookup(params["embed.pred"], pred_ids)]
    if config.mode == "input":
        parts.extend(syntax_embedded[r] for r in config.embedded_reprs)

    x = tc.add(tc.concat(parts, axis=-1), sinusoidal_positions(n, config.d_model))
    return EncodedInput(embedded=x, predicate_index=predicate_index, ids=ids,
                        syntax_embedded=syntax_embedded,
                        head_matrix=one_hot_head_matrix(tree, n) if tree is not None else None)


def _linear(x, W, b):
    return tc.add(tc.matmul(x, W), b)


def ffn(x, params, config, train_mode=False, rng=None):

    """max(0, xW1 + b1)W2 + b2, with dropout on the hidden layer in train mode."""

    if x.shape[-1] != params.W1.shape[0]:
        raise ShapeMismatch(f"ffn: input {x.shape} against W1 {params.W1.shape}")
    hidden = tc.relu(_linear(x, params.W1, params.b1))
    hidden = tc.dropout(hidden, config.dropout_ffn, train_mode, rng)
    return _linear(hidden, params.W2, params.b2)


def _check_qkv(Q, K, V):
    if Q.shape[-1] != K.shape[-1]:
        raise ShapeMismatch(f"attention: Q {Q.shape} and K {K.shape} widths differ")
    if K.shape[-2] != V.shape[-2]:
        raise ShapeMismatch(f"attention: K {K.shape} and V {V.shape} lengths differ")


def scaled_dot_attention(Q, K, V, train_mode=False, rate=0.0, rng=None):

    """
    softmax(QK^T / sqrt(d_k)) V.

    Returns:
    --------
    (output, weights); weights are taken before attention dropout.
    """

    Q, K, V = tc.as_tensor(Q), tc.as_tensor(K), tc.as_tensor(V)
    _check_qkv(Q, K, V)
    scores = tc.scale(tc.matmul(Q, tc.transpose_last_two(K)), 1.0 / np.sqrt(Q.shape[-1]))
    weights = tc.softmax(scores)
    return tc.matmul(tc.dropout(weights, rate, train_mode, rng), V), weights


def relaware_attention(Q, K, V, E_D=None, E_R=None, train_mode=False, rate=0.0, rng=None):

    """
    softmax((Q + E_D + E_R) K^T / sqrt(d_k)) (V + E_D + E_R). K is left as is.
    A missing E_D or E_R counts as zero.
    """

    Q, K, V = tc.as_tensor(Q), tc.as_tensor(K), tc.as_tensor(V)
    for name, E in (("E_D", E_D), ("E_R", E_R)):
        if E is None:
            continue
        E = tc.as_tensor(E)
        if E.shape != Q.shape or E.shape != V.shape:
            raise ShapeMismatch(f"relaware_attention: {name} {E.shape} against Q {Q.shape}, V {V.shape}")
        Q, V = tc.add(Q, E), tc.add(V, E)
    return scaled_dot_attention(Q, K, V, train_mode, rate, rng)


def lisa_head(M_D, V, E_R=None):

    """
    M_D (V ⊕ E_R): every row gathers the value (and relation embedding) of the
    token's syntactic head. No softmax and no scaling.

    Returns:
    --------
    (output, weights) where weights is M_D itself.
    """

    M = tc.as_tensor(M_D)
    V = tc.as_tensor(V)
    n = V.shape[-2]
    if M.shape != (n, n):
        raise ShapeMismatch(f"lisa_head: head matrix {M.shape} for {n} tokens")
    values = V
    if E_R is not None:
        E_R = tc.as_tensor(E_R)
        if E_R.shape[-2] != n:
            raise ShapeMismatch(f"lisa_head: E_R {E_R.shape} against V {V.shape}")
        values = tc.concat([V, E_R], axis=-1)
    return tc.matmul(M, values), M


def _syntax_sum(syntax, params, side):
    total = None
    for r in side:
        if r not in params.relawe:
            continue
        projected = tc.matmul(syntax.syntax_embedded[r], params.relawe[r])
        total = projected if total is None else tc.add(total, projected)
    return total


def multi_head(x, params, syntax, config, layer_index, train_mode=False, rng=None, trace=None):

    """
    Concat(head_1, ..., head_h) W^O for block `layer_index` (1-based).
    The head type depends on the mode: at block `lisa_layer` the last head is
    the LISA head; in blocks 1..relawe_layers every head is relation-aware.
    Head weight matrices are appended to `trace` when given.
    """

    if x.shape[-1] != config.d_model:
        raise ShapeMismatch(f"multi_head: input {x.shape} against d_model {config.d_model}")

    relawe_here = config.mode == "relawe" and layer_index <= config.relawe_layers
    if relawe_here:
        E_D = _syntax_sum(syntax, params, DEP_SIDE)
        E_R = _syntax_sum(syntax, params, REL_SIDE)

    outputs, lisa_here = [], False
    for h, hp in enumerate(params.heads):
        V = _linear(x, hp.WV, hp.bV)
        if _is_lisa_head(config, layer_index, h):
            lisa_here = True
            rel = [syntax.syntax_embedded[r] for r in config.embedded_reprs]
            E_rel = None if not rel else (rel[0] if len(rel) == 1 else tc.concat(rel, axis=-1))
            out, weights = lisa_head(syntax.head_matrix, V, E_rel)
        else:
            Q = _linear(x, hp.WQ, hp.bQ)
            K = tc.matmul(x, hp.WK)
            if relawe_here:
                out, weights = relaware_attention(Q, K, V, E_D, E_R, train_mode, config.dropout_attn, rng)
            else:
                out, weights = scaled_dot_attention(Q, K, V, train_mode, config.dropout_attn, rng)
        outputs.append(out)
        if trace is not None:
            trace.append((layer_index, h, weights.data.copy()))

    WO = params.WO
    if lisa_here and params.WO_rel is not None:
        WO = tc.concat([params.WO, params.WO_rel], axis=0)
    heads = outputs[0] if len(outputs) == 1 else tc.concat(outputs, axis=-1)
    return tc.matmul(heads, WO)


def encoder_block(x, params, syntax, config, layer_index, train_mode=False, rng=None, trace=None):

    """
    y = LayerNorm(x + dropout(FFN(x))); z = LayerNorm(y + dropout(MultiHead(y))).
    With `config.ffn_first` off the two sub-layers swap places.
    """

    def feed_forward(h):
        return ffn(h, params, config, train_mode, rng)

    def attention(h):
        return multi_head(h, params, syntax, config, layer_index, train_mode, rng, trace)

    first, second = (feed_forward, attention) if config.ffn_first else (attention, feed_forward)
    eps = config.layer_norm_eps

    y = tc.layer_norm(tc.add(x, tc.dropout(first(x), config.dropout_res, train_mode, rng)),
                      params.ln1_gain, params.ln1_bias, eps)
    return tc.layer_norm(tc.add(y, tc.dropout(second(y), config.dropout_res, train_mode, rng)),
                         params.ln2_gain, params.ln2_bias, eps)


def forward(sentence, predicate_index, tree, config, params, vocabs, train_mode=False, rng=None, trace=None):

    """
    Input layer, N encoder blocks and the affine prediction layer.

    Returns:
    --------
    Role-label logits, a Tensor of shape (sentence length, role vocab size).
    """

    syntax = build_input(sentence, predicate_index, tree, config, vocabs, params)
    x = syntax.embedded
    for layer in range(1, config.n_blocks + 1):
        x = encoder_block(x, LayerParams.of(params, layer, config), syntax, config, layer,
                          train_mode, rng, trace)
    return _linear(x, params["out.W"], params["out.b"])


def predict_roles(logits, label_vocab):

    """Per-token argmax (ties go to the lowest id); the no-role label maps to None."""

    scores = logits.data if isinstance(logits, tc.Tensor) else np.asarray(logits)
    if not np.all(np.isfinite(scores)):
        raise NonFiniteLogits("logits contain NaN or infinite values")
    labels = label_vocab.strings
    return tuple(None if labels[i] == NO_ROLE else labels[i] for i in np.argmax(scores, axis=-1))


def build_token_vocab(corpus, kind):

    """Vocabularies over the corpus itself: "word" forms, "pos" tags or "role" labels."""

    if kind not in TOKEN_KINDS:
        raise ConfigError(f"unknown token vocab kind {kind!r}, expected one of {TOKEN_KINDS}")
    counts = Counter()
    for s in corpus:
        for tok in s.tokens:
            if kind == "word":
                counts[tok.form] += 1
            elif kind == "pos":
                counts[tok.ppos or tok.pos or ABSENT] += 1
            else:
                counts.update(role for role in tok.apreds if role is not None)
    if kind == "role":
        return Vocab.from_counts("role", counts, reserved=(NO_ROLE,))
    return Vocab.from_counts(kind, counts)


def build_vocabs(corpus, trees, config):

    """Every vocabulary the config needs, counted over the training corpus and trees."""

    vocabs = {kind: build_token_vocab(corpus, kind) for kind in TOKEN_KINDS}
    for r in config.representation:
        kind = REPR_KIND[r]
        vocabs[kind] = build_syntax_vocab(corpus, kind, trees=trees)
    return vocabs


def vocab_sizes(vocabs):
    return {kind: len(v) for kind, v in vocabs.items()}


@dataclass
class SrlModel:
    config: ModelConfig
    params: Dict[str, tc.Tensor]
    vocabs: Dict[str, Vocab]

    @classmethod
    def create(cls, config, vocabs, rng):
        config.validate()
        tc.set_precision(config.precision)
        return cls(config=config, params=init_params(config, vocab_sizes(vocabs), rng), vocabs=vocabs)

    def forward(self, sentence, predicate_index, tree, train_mode=False, rng=None, trace=None):
        return forward(sentence, predicate_index, tree, self.config, self.params, self.vocabs,
                       train_mode, rng, trace)

    def predict(self, sentence, tree):

        """A copy of `sentence` whose role columns hold the model's predictions."""

        columns = []
        with tc.no_grad():
            for pred in sentence.predicates:
                columns.append(predict_roles(self.forward(sentence, pred, tree), self.vocabs["role"]))
        return sentence.with_apreds(columns)

    def check_vocabs(self):
        expected = {"word": "embed.word", "pos": "embed.pos", "role": "out.b"}
        expected.update({REPR_KIND[r]: f"syntax.{r}" for r in self.config.embedded_reprs})
        for kind, name in expected.items():
            if kind not in self.vocabs:
                raise VocabMismatch(kind, "missing from the checkpoint")
            rows = self.params[name].shape[0]
            if len(self.vocabs[kind]) != rows:
                raise VocabMismatch(kind, f"{len(self.vocabs[kind])} entries but parameter {name} has {rows} rows")
        for r in self.config.representation:
            if REPR_KIND[r] not in self.vocabs:
                raise VocabMismatch(REPR_KIND[r], "missing from the checkpoint")


def save_checkpoint(directory, model, extra_arrays=None):

    """
    Write the parameter archive, the `model.cfg` key=value manifest and one
    `vocab.<kind>.tsv` file per vocabulary into `directory`.
    """

    directory = Path(directory)
    arrays = OrderedDict((name, t.data) for name, t in model.params.items())
    if extra_arrays:
        arrays.update(extra_arrays)
    tc.save_archive(directory, arrays)

    lines = model.config.to_lines()
    for kind, vocab in model.vocabs.items():
        fname = f"vocab.{kind}.tsv"
        vocab.save(directory / fname)
        lines.append(f"vocab.{kind}={fname}")
    (directory / "model.cfg").write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_model_config(directory):
    lines = (Path(directory) / "model.cfg").read_text(encoding="utf-8").splitlines()
    return ModelConfig.from_lines(lines), lines


def load_checkpoint(directory):

    """
    Read a checkpoint written by `save_checkpoint`.

    Returns:
    --------
    (SrlModel, extra arrays stored alongside the parameters).
    """

    directory = Path(directory)
    config, lines = read_model_config(directory)
    config.validate()
    tc.set_precision(config.precision)

    vocabs = {}
    for line in lines:
        if line.startswith("vocab."):
            key, fname = line.split("=", 1)
            kind = key[len("vocab."):]
            if not (directory / fname).is_file():
                raise VocabMismatch(kind, f"file {fname} not found in {directory}")
            vocabs[kind] = Vocab.load(directory / fname)

    arrays = tc.load_archive(directory)
    params, extra = OrderedDict(), OrderedDict()
    for name, array in arrays.items():
        if "/" in name:
            extra[name] = array
        else:
            params[name] = tc.Tensor(array, True, name)

    model = SrlModel(config=config, params=params, vocabs=vocabs)
    model.check_vocabs()
    logger.debug("loaded %s model with %d parameters from %s", config.mode, len(params), directory)
    return model, extra
