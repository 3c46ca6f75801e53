"""Clauses and rule sets.

A clause is a conjunction of binary features, identified by sorted feature
indices; its complexity is 1 + number of features.  A DNF rule set predicts
positive when any clause is satisfied.  A CNF rule set is represented the way
it is trained: as clauses over the negated feature space, evaluated through
De Morgan (prediction is the negated DNF prediction on flipped inputs, which
works out to an AND of ORs over the original features).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import BinaryDataset, FeatureMeta

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Clause:
    """A conjunction over feature indices (sorted, distinct, nonempty)."""

    features: tuple

    def __post_init__(self):
        feats = tuple(sorted(set(int(j) for j in self.features)))
        if not feats:
            raise ValueError("a clause needs at least one feature")
        object.__setattr__(self, "features", feats)

    @property
    def complexity(self) -> int:
        return 1 + len(self.features)

    def covers(self, X: np.ndarray) -> np.ndarray:
        """Boolean vector: rows of X where every clause feature is 1."""
        sub = X[:, list(self.features)]
        return sub.all(axis=1) if sub.ndim == 2 else sub.astype(bool)


def selection_loss(clauses, ds: BinaryDataset) -> int:
    """Hamming training loss of a DNF clause selection on a binary dataset:
    uncovered positives plus, for every negative, the number of clauses
    covering it."""
    if not clauses:
        return len(ds.pos)
    cov = np.zeros(ds.n, dtype=np.int64)
    for cl in clauses:
        cov += cl.covers(ds.X)
    missed = int((cov[ds.pos] == 0).sum())
    return missed + int(cov[ds.neg].sum())


@dataclass
class RuleSet:
    """A trained model: per-clause condition lists plus label names.

    `clauses` holds tuples of FeatureMeta.  For DNF each tuple is an AND of
    conditions and the tuples are ORed.  For CNF each tuple is an OR of
    conditions and the tuples are ANDed; the conditions are stated over the
    original columns even though training ran on the negated dataset.
    `training` carries C, D, seed, z_train and lower_bound as written to the
    model file.
    """

    form: str  # "dnf" | "cnf"
    clauses: tuple
    positive_label: str
    negative_label: str
    training: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.form not in ("dnf", "cnf"):
            raise ValueError(f"unknown form {self.form!r}")
        self.clauses = tuple(tuple(cl) for cl in self.clauses)

    @property
    def complexity(self) -> int:
        return sum(1 + len(cl) for cl in self.clauses)

    def predict_cells(self, get_cell) -> bool:
        """Predict one sample given a cell accessor column -> raw value."""
        if self.form == "dnf":
            return any(all(c.evaluate(get_cell(c.column)) for c in cl)
                       for cl in self.clauses)
        return all(any(c.evaluate(get_cell(c.column)) for c in cl)
                   for cl in self.clauses)

    def predict_rows(self, header: list[str], rows) -> list[str]:
        """Predict raw CSV rows (lists of cells aligned with header).

        Returns original label strings.  Raises KeyError-style errors if a
        referenced column is absent and ValueError for unparseable numeric
        cells; callers attach row context.
        """
        needed = {c.column for cl in self.clauses for c in cl}
        missing = sorted(needed - set(header))
        if missing:
            raise ValueError(f"input is missing columns required by the model: "
                             f"{', '.join(missing)}")
        idx = {c: header.index(c) for c in needed}
        out = []
        for row in rows:
            hit = self.predict_cells(lambda col: row[idx[col]])
            out.append(self.positive_label if hit else self.negative_label)
        return out

    def render(self) -> str:
        """Human-readable IF/THEN text, clauses sorted by size then literals."""
        inner = " AND " if self.form == "dnf" else " OR "
        outer = "OR" if self.form == "dnf" else "AND"
        parts = []
        for cl in sorted(self.clauses, key=lambda cl: (len(cl), [c.describe() for c in cl])):
            parts.append("(" + inner.join(c.describe() for c in cl) + ")")
        if not parts:
            body = "<never>" if self.form == "dnf" else "<always>"
            lines = [f"IF {body}"]
        else:
            lines = [f"IF {parts[0]}"]
            lines += [f"{outer} {p}" for p in parts[1:]]
        lines.append(f"THEN {self.positive_label}")
        lines.append(f"ELSE {self.negative_label}")
        return "\n".join(lines)

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "form": self.form,
            "label_map": {"positive": self.positive_label,
                          "negative": self.negative_label},
            "clauses": [
                [{"column": c.column, "kind": c.kind, "value": c.value} for c in cl]
                for cl in self.clauses
            ],
            "training": self.training,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RuleSet":
        doc = json.loads(text)
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {version!r}")
        clauses = tuple(
            tuple(FeatureMeta(c["column"], c["kind"], c["value"]) for c in cl)
            for cl in doc["clauses"]
        )
        return cls(form=doc["form"], clauses=clauses,
                   positive_label=doc["label_map"]["positive"],
                   negative_label=doc["label_map"]["negative"],
                   training=doc.get("training", {}))


def build_ruleset(clauses, ds: BinaryDataset, form: str, training: dict | None = None,
                  original: BinaryDataset | None = None) -> RuleSet:
    """Turn index clauses from training into a portable RuleSet.

    For DNF, `ds` is the training dataset and conditions are its feature
    metas.  For CNF, training ran on the negated dataset `ds`; pass the
    pre-negation dataset as `original`.  Feature j of the negated data is
    true exactly when original feature j is false, so by De Morgan the final
    AND-of-ORs uses the original metas at the same indices and the label
    names of the original dataset.
    """
    src = original if form == "cnf" else ds
    if src.features is None:
        raise ValueError("dataset has no feature metadata; cannot build a rule set")
    conds = tuple(
        tuple(src.features[j] for j in cl.features)
        for cl in clauses
    )
    return RuleSet(form=form, clauses=conds,
                   positive_label=src.positive_label,
                   negative_label=src.negative_label,
                   training=dict(training or {}))


def _index_clauses(rs: RuleSet, ds: BinaryDataset):
    """Map a rule set's conditions back to feature indices of `ds`."""
    if ds.features is None:
        raise ValueError("dataset has no feature metadata")
    lookup = {meta: j for j, meta in enumerate(ds.features)}
    out = []
    for cl in rs.clauses:
        try:
            out.append(Clause(tuple(lookup[c] for c in cl)))
        except KeyError as e:
            raise ValueError(f"condition {e.args[0]} not in dataset feature space") from None
    return out


def predict(rs: RuleSet, ds: BinaryDataset) -> np.ndarray:
    """0/1 predictions of a rule set on a binarized dataset.

    The CNF path reuses the DNF machinery on flipped inputs and negates the
    outcome; rs conditions must exist in ds's feature space (for CNF, in the
    original orientation).
    """
    if rs.form == "cnf":
        flipped = BinaryDataset(X=1 - ds.X, y=ds.y.copy(),
                                features=None if ds.features is None else
                                [f.complement() for f in ds.features],
                                partner=None if ds.partner is None else ds.partner.copy())
        comp = RuleSet(form="dnf",
                       clauses=tuple(tuple(c.complement() for c in cl) for cl in rs.clauses),
                       positive_label=rs.positive_label,
                       negative_label=rs.negative_label)
        return 1 - predict(comp, flipped)
    clauses = _index_clauses(rs, ds)
    hit = np.zeros(ds.n, dtype=bool)
    for cl in clauses:
        hit |= cl.covers(ds.X)
    return hit.astype(np.uint8)


def hamming_loss(rs: RuleSet, ds: BinaryDataset) -> int:
    """Training-orientation Hamming loss on `ds`.

    For DNF: false negatives plus one per (negative sample, covering clause)
    pair.  For CNF the same quantity is computed on the negated dataset with
    complemented conditions, which is exactly the objective the trainer
    minimized.
    """
    if rs.form == "cnf":
        comp = RuleSet(form="dnf",
                       clauses=tuple(tuple(c.complement() for c in cl) for cl in rs.clauses),
                       positive_label=rs.negative_label,
                       negative_label=rs.positive_label)
        return hamming_loss(comp, ds.negated())
    clauses = _index_clauses(rs, ds)
    return selection_loss(clauses, ds)
