"""Transfer analysis: relative improvement, least-squares fits with R²,
Pearson correlation, and the per-factor variance-explained table."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class AnalysisError(ValueError):
    """Degenerate input to a fit or correlation."""


@dataclass
class FitResult:
    coefficients: list[float]
    intercept: float
    r_squared: float


@dataclass
class TransferPoint:
    """Per-language inputs to the transfer analysis.

    difficulty is the pre-transfer recall@1 of the per-language model;
    overlap_with_reference is that language's directed vocabulary overlap
    with a fixed reference language.
    """

    lang: str
    per_language_recall: float
    combined_recall: float
    train_share: float
    difficulty: float
    overlap_with_reference: float


def relative_improvement(combined: float, per_language: float) -> float:
    """(combined - per_language) / per_language."""
    if per_language <= 0:
        raise AnalysisError(
            f"relative improvement undefined for per-language recall {per_language}"
        )
    return (combined - per_language) / per_language


def multi_fit(features, ys) -> FitResult:
    """Ordinary least squares with intercept; R² = 1 - SS_res / SS_tot."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n, p = X.shape
    if y.shape != (n,):
        raise AnalysisError(f"shape mismatch: {n} rows of features, {y.shape} targets")
    if n <= p:
        raise AnalysisError(f"need more than {p} points for a {p}-factor fit, got {n}")
    design = np.hstack([np.ones((n, 1)), X])
    if np.linalg.matrix_rank(design) < p + 1:
        raise AnalysisError("design matrix is rank deficient")
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ beta
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    r2 = min(1.0, max(0.0, r2))
    return FitResult(coefficients=[float(b) for b in beta[1:]], intercept=float(beta[0]), r_squared=r2)


def linear_fit(xs, ys) -> FitResult:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 1:
        raise AnalysisError("linear_fit expects a flat list of x values")
    if len(xs) < 2:
        raise AnalysisError("need at least 2 points")
    if np.all(xs == xs[0]):
        raise AnalysisError("x values are all equal; slope is undefined")
    return multi_fit(xs.reshape(-1, 1), ys)


def pearson_r(xs, ys) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise AnalysisError("inputs must be equal-length flat sequences")
    if len(x) < 2:
        raise AnalysisError("need at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(dx @ dx)
    sy = float(dy @ dy)
    if sx == 0.0 or sy == 0.0:
        raise AnalysisError("correlation undefined when either input has zero variance")
    return float((dx @ dy) / np.sqrt(sx * sy))


_FACTORS = ("train_share", "difficulty", "overlap_with_reference")


@dataclass
class TransferRow:
    lang: str
    per_language_recall: float
    combined_recall: float
    relative_improvement: float
    absolute_improvement: float
    train_share: float
    difficulty: float
    overlap_with_reference: float
    excluded_from_fits: bool = False


@dataclass
class TransferTable:
    k: int
    rows: list[TransferRow]
    relative_fits: dict[str, FitResult]
    absolute_fits: dict[str, FitResult]
    negative_transfer: list[str]
    excluded: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        def fits_dict(fits: dict[str, FitResult]) -> dict:
            return {
                name: {
                    "coefficients": f.coefficients,
                    "intercept": f.intercept,
                    "r_squared": f.r_squared,
                }
                for name, f in fits.items()
            }

        return {
            "k": self.k,
            "languages": [
                {
                    "lang": r.lang,
                    "per_language_recall": r.per_language_recall,
                    "combined_recall": r.combined_recall,
                    "relative_improvement": r.relative_improvement,
                    "absolute_improvement": r.absolute_improvement,
                    "train_share": r.train_share,
                    "difficulty": r.difficulty,
                    "overlap_with_reference": r.overlap_with_reference,
                    "excluded_from_fits": r.excluded_from_fits,
                }
                for r in self.rows
            ],
            "variance_explained": {
                "relative_improvement": fits_dict(self.relative_fits),
                "absolute_improvement": fits_dict(self.absolute_fits),
            },
            "negative_transfer": self.negative_transfer,
            "excluded": self.excluded,
        }

    def to_tsv(self) -> str:
        lines = ["factor\trelative_r2\tabsolute_r2"]
        for name in (*_FACTORS, "combined"):
            rel = self.relative_fits.get(name)
            ab = self.absolute_fits.get(name)
            lines.append(
                f"{name}\t{rel.r_squared:.6f}\t{ab.r_squared:.6f}"
                if rel and ab
                else f"{name}\tn/a\tn/a"
            )
        lines.append("")
        lines.append(
            "lang\tper_language_recall\tcombined_recall\trelative_improvement"
            "\tabsolute_improvement\ttrain_share\tdifficulty\toverlap_with_reference"
        )
        for r in self.rows:
            lines.append(
                f"{r.lang}\t{r.per_language_recall:.6f}\t{r.combined_recall:.6f}"
                f"\t{r.relative_improvement:+.6f}\t{r.absolute_improvement:+.6f}"
                f"\t{r.train_share:.6f}\t{r.difficulty:.6f}\t{r.overlap_with_reference:.6f}"
            )
        return "\n".join(lines) + "\n"


def transfer_table(
    points: list[TransferPoint], k: int = 1, exclude: tuple[str, ...] = ()
) -> TransferTable:
    """Build the per-language improvement table and the variance-explained fits.

    Emits single-factor R² for train share, difficulty, and vocabulary overlap
    plus one combined multivariate fit, separately for relative and absolute
    improvement (the two y-axes used for these analyses). Languages in
    ``exclude`` are reported but left out of the fits; the negative-transfer
    flag list names every language whose relative improvement is below zero.
    """
    if len(points) < 3:
        raise AnalysisError(f"need at least 3 points, got {len(points)}")
    rows = []
    for p in points:
        rel = relative_improvement(p.combined_recall, p.per_language_recall)
        rows.append(
            TransferRow(
                lang=p.lang,
                per_language_recall=p.per_language_recall,
                combined_recall=p.combined_recall,
                relative_improvement=rel,
                absolute_improvement=p.combined_recall - p.per_language_recall,
                train_share=p.train_share,
                difficulty=p.difficulty,
                overlap_with_reference=p.overlap_with_reference,
                excluded_from_fits=p.lang in exclude,
            )
        )
    fit_rows = [r for r in rows if not r.excluded_from_fits]
    if len(fit_rows) < 3:
        raise AnalysisError("fewer than 3 points remain after exclusions")

    def fits_for(y_name: str) -> dict[str, FitResult]:
        ys = [getattr(r, y_name) for r in fit_rows]
        fits = {}
        for factor in _FACTORS:
            fits[factor] = linear_fit([getattr(r, factor) for r in fit_rows], ys)
        fits["combined"] = multi_fit(
            [[getattr(r, f) for f in _FACTORS] for r in fit_rows], ys
        )
        return fits

    return TransferTable(
        k=k,
        rows=rows,
        relative_fits=fits_for("relative_improvement"),
        absolute_fits=fits_for("absolute_improvement"),
        negative_transfer=[r.lang for r in rows if r.relative_improvement < 0],
        excluded=list(exclude),
    )
