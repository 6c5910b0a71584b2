"""Binary detection metrics (attack = positive class) and embedding export."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    # names of metrics whose denominator was zero and were reported as 0
    zero_division: tuple = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def as_dict(self) -> dict:
        d = asdict(self)
        d["zero_division"] = ",".join(self.zero_division) or "none"
        return d

    def to_keyvalue(self, extra: dict | None = None) -> str:
        items = dict(self.as_dict())
        if extra:
            items.update(extra)
        return "".join(f"{k}={_fmt(v)}\n" for k, v in items.items())

    def to_table(self, title: str = "", n_params: int | None = None) -> str:
        rows = [
            ("Acc (%)", f"{100 * self.accuracy:.2f}"),
            ("Prec (%)", f"{100 * self.precision:.2f}"),
            ("Rec (%)", f"{100 * self.recall:.2f}"),
            ("F1 (%)", f"{100 * self.f1:.2f}"),
        ]
        if n_params is not None:
            rows.append(("Params", f"{n_params:,}"))
        width = max(len(k) for k, _ in rows)
        lines = [title] if title else []
        lines += [f"{k:<{width}}  {v:>10}" for k, v in rows]
        lines.append("")
        lines.append(f"{'':<10}{'pred 0':>10}{'pred 1':>10}")
        lines.append(f"{'true 0':<10}{self.tn:>10}{self.fp:>10}")
        lines.append(f"{'true 1':<10}{self.fn:>10}{self.tp:>10}")
        return "\n".join(lines) + "\n"

    def confusion_csv(self) -> str:
        return f",pred_0,pred_1\ntrue_0,{self.tn},{self.fp}\ntrue_1,{self.fn},{self.tp}\n"


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_from_counts(tp: int, fp: int, tn: int, fn: int) -> EvalReport:
    flagged = []

    def ratio(num, den, name):
        if den == 0:
            flagged.append(name)
            return 0.0
        return num / den

    n = tp + fp + tn + fn
    if n == 0:
        raise ValueError("cannot evaluate an empty dataset")
    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    f1 = ratio(2 * precision * recall, precision + recall, "f1")
    return EvalReport(
        int(tp), int(fp), int(tn), int(fn), (tp + tn) / n, precision, recall, f1, tuple(flagged)
    )


def report_from_predictions(y_true, y_pred) -> EvalReport:
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    if y_true.shape != y_pred.shape:
        raise ValueError("label and prediction shapes differ")
    tp = int(np.sum(y_true & y_pred))
    fp = int(np.sum(~y_true & y_pred))
    tn = int(np.sum(~y_true & ~y_pred))
    fn = int(np.sum(y_true & ~y_pred))
    return report_from_counts(tp, fp, tn, fn)


def predict_logits(model, features, chunk: int = 2048) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != model.input_dim:
        raise ValueError(
            f"model expects {model.input_dim} features, dataset has shape {features.shape}"
        )
    out = [model.forward(features[i : i + chunk]) for i in range(0, len(features), chunk)]
    return np.concatenate(out) if out else np.zeros((0, model.output_dim))


def evaluate(model, dataset, decision_rule: str = "argmax") -> EvalReport:
    if decision_rule != "argmax":
        raise ValueError(f"unsupported decision rule {decision_rule!r}")
    if len(dataset.labels) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    logits = predict_logits(model, dataset.features)
    return report_from_predictions(dataset.labels == 1, logits.argmax(axis=1) == 1)


def export_embeddings(model, dataset, layer_tag: str, path, chunk: int = 2048) -> Path:
    """Write one row per sample: embedding values, then the true label."""
    if layer_tag not in ("logits", "penultimate"):
        raise ValueError(f"layer_tag must be 'logits' or 'penultimate', got {layer_tag!r}")
    feats = np.asarray(dataset.features, dtype=np.float64)
    emb = np.concatenate(
        [model.forward(feats[i : i + chunk], tag=layer_tag) for i in range(0, len(feats), chunk)]
    )
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"e{i}" for i in range(emb.shape[1])] + ["label"])
        for row, label in zip(emb, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
    return path
