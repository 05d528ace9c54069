"""
Read, write and score CoNLL-2009 corpora.

Columns: ID FORM LEMMA PLEMMA POS PPOS FEAT PFEAT HEAD PHEAD DEPREL PDEPREL
FILLPRED PRED APRED1 ... APREDk, one APRED column per predicate of the
sentence. "_" is the absent marker everywhere.
"""

import logging
from dataclasses import dataclass, replace
from os.path import expanduser
from pathlib import Path
from typing import Optional, Tuple

import click

from .common import AlignmentError, MalformedRow, SrlError

logger = logging.getLogger(__name__)

ABSENT = "_"
N_FIXED_COLUMNS = 14
WHICH = ("gold", "predicted")


def _opt(field):
    return None if field == ABSENT else field


def _col(value):
    return ABSENT if value is None else str(value)


@dataclass(frozen=True)
class Token:
    id: int
    form: str
    lemma: Optional[str]
    plemma: Optional[str]
    pos: Optional[str]
    ppos: Optional[str]
    feat: Optional[str]
    pfeat: Optional[str]
    head: Optional[int]
    phead: Optional[int]
    deprel: Optional[str]
    pdeprel: Optional[str]
    fill_pred: bool
    pred_sense: Optional[str]
    apreds: Tuple[Optional[str], ...]


@dataclass(frozen=True)
class Sentence:
    tokens: Tuple[Token, ...]

    def __len__(self):
        return len(self.tokens)

    @property
    def predicates(self):
        return tuple(tok.id for tok in self.tokens if tok.fill_pred)

    @property
    def forms(self):
        return tuple(tok.form for tok in self.tokens)

    def heads(self, which="gold"):
        _check_which(which)
        return tuple(tok.head if which == "gold" else tok.phead for tok in self.tokens)

    def labels(self, which="gold"):
        _check_which(which)
        return tuple(tok.deprel if which == "gold" else tok.pdeprel for tok in self.tokens)

    def with_apreds(self, columns):

        """
        Return a copy whose role columns are replaced.

        Parameters:
        -----------
        columns (sequence of sequences): One column per predicate, each with one
            optional role per token.
        """

        if len(columns) != len(self.predicates):
            raise AlignmentError(f"expected {len(self.predicates)} role columns, got {len(columns)}")
        for column in columns:
            if len(column) != len(self):
                raise AlignmentError(f"role column of length {len(column)} for a sentence of length {len(self)}")

        tokens = tuple(replace(tok, apreds=tuple(column[i] for column in columns))
                       for i, tok in enumerate(self.tokens))
        return Sentence(tokens)


@dataclass(frozen=True)
class PredicateInstance:
    sentence: Sentence
    predicate_index: int
    roles: Tuple[Optional[str], ...]

    def roles_by_id(self):
        return {i + 1: role for i, role in enumerate(self.roles) if role is not None}


@dataclass(frozen=True)
class ScoreReport:
    predicted: int
    gold: int
    correct: int

    @property
    def labeled_precision(self):
        return self.correct / self.predicted if self.predicted else 0.0

    @property
    def labeled_recall(self):
        return self.correct / self.gold if self.gold else 0.0

    @property
    def labeled_f1(self):
        p, r = self.labeled_precision, self.labeled_recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def machine_line(self):
        return f"P={self.labeled_precision:.6f} R={self.labeled_recall:.6f} F1={self.labeled_f1:.6f}"

    def summary(self):
        return (f"  labeled precision: {100 * self.labeled_precision:6.2f} %  ({self.correct} / {self.predicted})\n"
                f"  labeled recall:    {100 * self.labeled_recall:6.2f} %  ({self.correct} / {self.gold})\n"
                f"  labeled F1:        {100 * self.labeled_f1:6.2f}\n")


@dataclass(frozen=True)
class TreeQuality:
    tokens: int
    head_matches: int
    label_matches: int

    @property
    def uas(self):
        return self.head_matches / self.tokens if self.tokens else 0.0

    @property
    def las(self):
        return self.label_matches / self.tokens if self.tokens else 0.0


def _check_which(which):
    if which not in WHICH:
        raise ValueError(f"`which` must be one of {WHICH}, not {which!r}")


def _parse_head(field, line_number):
    if field == ABSENT:
        return None
    try:
        return int(field)
    except ValueError:
        raise MalformedRow(f"non-integer head {field!r}", line_number)


def parse_sentence(lines, first_line=1):

    """
    Parse one blank-line-delimited block of CoNLL-2009 rows.

    Parameters:
    -----------
    lines (list of str): Tab-separated rows, with or without trailing newlines.
    first_line (int): File line number of the first row, used in error messages.

    Returns:
    --------
    A Sentence.
    """

    rows = [line.rstrip("\r\n") for line in lines]
    if len(rows) == 0:
        raise MalformedRow("empty sentence block", first_line)

    split_rows = []
    for offset, row in enumerate(rows):
        fields = row.split("\t")
        if len(fields) < N_FIXED_COLUMNS:
            raise MalformedRow(f"expected at least {N_FIXED_COLUMNS} fields, found {len(fields)}",
                               first_line + offset)
        if any(field == "" for field in fields):
            raise MalformedRow("empty field (use '_' for absent values)", first_line + offset)
        split_rows.append(fields)

    n_preds = sum(1 for fields in split_rows if fields[12] != ABSENT)
    n = len(split_rows)

    tokens = []
    for offset, fields in enumerate(split_rows):
        line_number = first_line + offset

        try:
            token_id = int(fields[0])
        except ValueError:
            raise MalformedRow(f"non-integer id {fields[0]!r}", line_number)
        if token_id != offset + 1:
            raise MalformedRow(f"id gap: expected {offset + 1}, found {token_id}", line_number)

        if len(fields) != N_FIXED_COLUMNS + n_preds:
            raise MalformedRow(f"expected {N_FIXED_COLUMNS + n_preds} fields for {n_preds} predicate(s), "
                               f"found {len(fields)}", line_number)

        head = _parse_head(fields[8], line_number)
        phead = _parse_head(fields[9], line_number)
        for name, value in (("head", head), ("phead", phead)):
            if value is None:
                continue
            if not 0 <= value <= n:
                raise MalformedRow(f"{name} {value} outside [0, {n}]", line_number)
            if value == token_id:
                raise MalformedRow(f"{name} of token {token_id} points at itself", line_number)

        fill_pred = fields[12] != ABSENT
        pred_sense = _opt(fields[13])
        if fill_pred and fields[12] != "Y":
            raise MalformedRow(f"FILLPRED must be 'Y' or '_', found {fields[12]!r}", line_number)
        if fill_pred != (pred_sense is not None):
            raise MalformedRow("FILLPRED and PRED disagree", line_number)

        tokens.append(Token(id=token_id,
                            form=fields[1],
                            lemma=_opt(fields[2]),
                            plemma=_opt(fields[3]),
                            pos=_opt(fields[4]),
                            ppos=_opt(fields[5]),
                            feat=_opt(fields[6]),
                            pfeat=_opt(fields[7]),
                            head=head,
                            phead=phead,
                            deprel=_opt(fields[10]),
                            pdeprel=_opt(fields[11]),
                            fill_pred=fill_pred,
                            pred_sense=pred_sense,
                            apreds=tuple(_opt(f) for f in fields[N_FIXED_COLUMNS:])))

    return Sentence(tuple(tokens))


def write_sentence(s):

    """Format a Sentence as CoNLL-2009 rows (without trailing newlines)."""

    lines = []
    for tok in s.tokens:
        fields = [str(tok.id), tok.form,
                  _col(tok.lemma), _col(tok.plemma),
                  _col(tok.pos), _col(tok.ppos),
                  _col(tok.feat), _col(tok.pfeat),
                  _col(tok.head), _col(tok.phead),
                  _col(tok.deprel), _col(tok.pdeprel),
                  "Y" if tok.fill_pred else ABSENT, _col(tok.pred_sense)]
        fields.extend(_col(role) for role in tok.apreds)
        lines.append("\t".join(fields))
    return lines


def iter_blocks(lines):

    """Yield (first_line_number, rows) for each blank-line-delimited block."""

    block, start = [], None
    for i, line in enumerate(lines, start=1):
        if line.strip() == "":
            if block:
                yield start, block
            block, start = [], None
        else:
            if start is None:
                start = i
            block.append(line)
    if block:
        yield start, block


def _decode_lines(raw):
    lines = []
    for i, line in enumerate(raw.split(b"\n"), start=1):
        try:
            text = line.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedRow(f"not valid UTF-8 at byte {e.start}", i) from None
        lines.append(text[:-1] if text.endswith("\r") else text)
    return lines


def read_corpus(path):
    path = expanduser(str(path))
    with open(path, "rb") as f:
        lines = _decode_lines(f.read())
    corpus = [parse_sentence(block, start) for start, block in iter_blocks(lines)]
    logger.debug("read %d sentences from %s", len(corpus), path)
    return corpus


def write_corpus(path, sentences):
    path = expanduser(str(path))
    with open(path, "w", encoding="utf-8") as f:
        for s in sentences:
            f.write("\n".join(write_sentence(s)))
            f.write("\n\n")


def extract_instances(s):

    """One PredicateInstance per predicate; the k-th reads the k-th role column."""

    return [PredicateInstance(sentence=s,
                              predicate_index=pred,
                              roles=tuple(tok.apreds[k] for tok in s.tokens))
            for k, pred in enumerate(s.predicates)]


def _check_alignment(gold, pred):
    if len(gold) != len(pred):
        raise AlignmentError(f"gold has {len(gold)} sentences, prediction has {len(pred)}")
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise AlignmentError(f"sentence {i}: gold length {len(g)}, predicted length {len(p)}")
        if g.predicates != p.predicates:
            raise AlignmentError(f"sentence {i}: predicate indices differ "
                                 f"(gold {list(g.predicates)}, predicted {list(p.predicates)})")


def _arcs(corpus, exclude_pred_sense):
    arcs = set()
    for i, s in enumerate(corpus):
        for inst in extract_instances(s):
            for token_id, role in inst.roles_by_id().items():
                arcs.add((i, inst.predicate_index, token_id, role))
            if not exclude_pred_sense:
                sense = s.tokens[inst.predicate_index - 1].pred_sense
                arcs.add((i, inst.predicate_index, inst.predicate_index, ("sense", sense)))
    return arcs


def score(gold, pred, exclude_pred_sense=True):

    """
    Labeled precision, recall and F1 over argument arcs.

    Parameters:
    -----------
    gold (list of Sentence): Reference corpus.
    pred (list of Sentence): System corpus, sentence-aligned with `gold`.
    exclude_pred_sense (bool): If True, predicate senses contribute nothing.
        If False, each predicate adds one sense arc to both sides.

    Returns:
    --------
    A ScoreReport.
    """

    _check_alignment(gold, pred)
    gold_arcs = _arcs(gold, exclude_pred_sense)
    pred_arcs = _arcs(pred, exclude_pred_sense)
    return ScoreReport(predicted=len(pred_arcs), gold=len(gold_arcs), correct=len(gold_arcs & pred_arcs))


def attachment_scores(corpus):

    """UAS/LAS of the predicted tree columns measured against the gold columns."""

    tokens = heads = labels = 0
    for s in corpus:
        for tok in s.tokens:
            if tok.head is None:
                continue
            tokens += 1
            if tok.phead == tok.head:
                heads += 1
                if tok.pdeprel == tok.deprel:
                    labels += 1
    return TreeQuality(tokens=tokens, head_matches=heads, label_matches=labels)


# Formatted for click; config is a dict loaded from yaml:
def main(config):

    gold_path = expanduser(config["score"]["gold"])
    pred_path = expanduser(config["score"]["pred"])
    exclude_pred_sense = config["score"].get("exclude_pred_sense", True)

    for path in (gold_path, pred_path):
        if not Path(path).is_file():
            raise SrlError(f"{path} is not a file.")

    report = score(read_corpus(gold_path), read_corpus(pred_path), exclude_pred_sense)
    click.echo(report.summary())
    click.echo(report.machine_line())

    return report


def tree_quality_main(config):

    corpus_path = expanduser(config["tree_quality"]["corpus"])
    if not Path(corpus_path).is_file():
        raise SrlError(f"{corpus_path} is not a file.")

    quality = attachment_scores(read_corpus(corpus_path))
    click.echo(f"  UAS: {100 * quality.uas:6.2f} %  ({quality.head_matches} / {quality.tokens})")
    click.echo(f"  LAS: {100 * quality.las:6.2f} %  ({quality.label_matches} / {quality.tokens})")
    click.echo(f"UAS={quality.uas:.6f} LAS={quality.las:.6f}")

    return quality
