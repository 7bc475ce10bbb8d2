"""Threat-trend aggregation and forecasting.

Monthly incident counts per filter are fitted with a seasonal ARIMA-style
model: d regular and D seasonal differences, then an AR(p) least-squares fit
(with a Hannan-Rissanen second stage when q > 0), inverted back to the
original scale. No optimizer dependency; orders come from the config.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .errors import SeriesTooShort
from .store import KnowledgeDb, QueryFilter, StoreStats


@dataclass(frozen=True)
class TrendSeries:
    points: tuple[tuple[date, int], ...]  # (first day of month, count), contiguous
    filter: QueryFilter = QueryFilter()

    def counts(self) -> list[int]:
        return [count for _, count in self.points]


@dataclass(frozen=True)
class ForecastConfig:
    p: int = 1
    d: int = 1
    q: int = 0
    seasonal_p: int = 0
    seasonal_d: int = 1
    seasonal_q: int = 0
    s: int = 12
    horizon: int = 6

    def __post_init__(self):
        if min(self.p, self.d, self.q, self.seasonal_p, self.seasonal_d, self.seasonal_q) < 0:
            raise ValueError("orders must be non-negative")
        if self.s < 2:
            raise ValueError("seasonal period must be >= 2")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def min_length(self) -> int:
        return self.s + (self.d + self.seasonal_d * self.s) + self.p + 2


@dataclass(frozen=True)
class ForecastPoint:
    month: date
    value: float
    lo: float
    hi: float


def _next_month(month: date) -> date:
    if month.month == 12:
        return date(month.year + 1, 1, 1)
    return date(month.year, month.month + 1, 1)


def aggregate(store: KnowledgeDb, flt: QueryFilter = QueryFilter()) -> TrendSeries:
    """Monthly counts of matching breadcrumbs between the first and last
    matching article dates, zero-filled."""
    crumbs = store.query(flt)
    dated = []
    for crumb in crumbs:
        published = store._published(crumb)
        if published != date.min:
            dated.append(date(published.year, published.month, 1))
    if not dated:
        return TrendSeries(points=(), filter=flt)
    counts: dict[date, int] = {}
    for month in dated:
        counts[month] = counts.get(month, 0) + 1
    month = min(dated)
    last = max(dated)
    points = []
    while month <= last:
        points.append((month, counts.get(month, 0)))
        month = _next_month(month)
    return TrendSeries(points=tuple(points), filter=flt)


def _difference(values: np.ndarray, lag: int, times: int) -> np.ndarray:
    out = values
    for _ in range(times):
        out = out[lag:] - out[:-lag]
    return out


def _fit_ar(w: np.ndarray, p: int, q: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Least-squares fit of w_t on an intercept, p own lags, and (for q > 0)
    q lagged residuals from a long-AR pre-fit. Returns (coefficients,
    residuals over the fit window, lagged-residual series)."""
    n = len(w)
    residual_series = np.zeros(n)
    if q > 0:
        m = min(max(p + q + 3, 5), max(n // 2, 1))
        rows = [[1.0] + [w[t - i] for i in range(1, m + 1)] for t in range(m, n)]
        design = np.array(rows)
        coefs, *_ = np.linalg.lstsq(design, w[m:], rcond=None)
        residual_series[m:] = w[m:] - design @ coefs

    start = max(p, q)
    rows = []
    for t in range(start, n):
        row = [1.0]
        row += [w[t - i] for i in range(1, p + 1)]
        row += [residual_series[t - j] for j in range(1, q + 1)]
        rows.append(row)
    design = np.array(rows) if rows else np.zeros((0, 1 + p + q))
    target = w[start:]
    coefs, *_ = np.linalg.lstsq(design, target, rcond=None) if len(rows) else (
        np.zeros(1 + p + q),
    )
    fitted = design @ coefs if len(rows) else np.zeros(0)
    residuals = target - fitted
    return coefs, residuals, residual_series


def forecast(series: TrendSeries, cfg: ForecastConfig = ForecastConfig()) -> list[ForecastPoint]:
    """Horizon-month forecasts with naive constant-width 95% intervals;
    negative point predictions are clipped to zero."""
    y = np.array(series.counts(), dtype=float)
    if len(y) < cfg.min_length:
        raise SeriesTooShort(
            f"need at least {cfg.min_length} monthly points for this configuration, "
            f"got {len(y)}"
        )

    # Difference seasonally first, then regularly; keep each level's history
    # so the inversion can walk back up.
    levels = [y]
    for _ in range(cfg.seasonal_d):
        levels.append(_difference(levels[-1], cfg.s, 1))
    for _ in range(cfg.d):
        levels.append(_difference(levels[-1], 1, 1))
    lags = [cfg.s] * cfg.seasonal_d + [1] * cfg.d

    w = levels[-1]
    p_eff = cfg.p + cfg.seasonal_p * cfg.s  # seasonal AR folded into plain lags
    q_eff = cfg.q + cfg.seasonal_q * cfg.s
    coefs, residuals, residual_series = _fit_ar(w, p_eff, q_eff)
    sigma = float(np.sqrt(np.mean(residuals**2))) if len(residuals) else 0.0

    histories = [list(level) for level in levels]
    future_residuals = list(residual_series)
    points = []
    month = series.points[-1][0]
    for _ in range(cfg.horizon):
        month = _next_month(month)
        w_hist = histories[-1]
        prediction = coefs[0]
        for i in range(1, p_eff + 1):
            prediction += coefs[i] * w_hist[-i]
        for j in range(1, q_eff + 1):
            prediction += coefs[p_eff + j] * future_residuals[-j]
        future_residuals.append(0.0)
        histories[-1].append(float(prediction))
        # Invert the differencing chain: value at level k-1 is the new deepest
        # value plus the (lagged) previous value one level up.
        for depth in range(len(histories) - 1, 0, -1):
            lag = lags[depth - 1]
            restored = histories[depth][-1] + histories[depth - 1][-lag]
            histories[depth - 1].append(float(restored))
        value = histories[0][-1]
        clipped = max(0.0, value)
        points.append(
            ForecastPoint(
                month=month,
                value=clipped,
                lo=clipped - 1.96 * sigma,
                hi=clipped + 1.96 * sigma,
            )
        )
    return points


@dataclass
class TrendReport:
    markdown: str
    csv_text: str
    stats: StoreStats
    series: TrendSeries
    forecast_points: list[ForecastPoint] = field(default_factory=list)
    forecast_note: str = ""


def _topic_breakdown(store: KnowledgeDb, flt: QueryFilter) -> list[tuple[str, int]]:
    counts: dict[str, int] = {}
    for crumb in store.query(flt):
        for topic in crumb.topics:
            counts[topic.value] = counts.get(topic.value, 0) + 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def trend_report(
    store: KnowledgeDb,
    flt: QueryFilter = QueryFilter(),
    cfg: ForecastConfig = ForecastConfig(),
) -> TrendReport:
    """Markdown trend report plus a CSV of (month, count, forecast, lo, hi).

    Sections degrade gracefully: an empty store or a too-short series yields
    an explanatory note instead of an error.
    """
    stats = store.stats(flt)
    series = aggregate(store, flt)
    forecast_points: list[ForecastPoint] = []
    note = ""
    if not series.points:
        note = "insufficient data: no matching incidents"
    else:
        try:
            forecast_points = forecast(series, cfg)
        except SeriesTooShort as exc:
            note = f"forecast unavailable: {exc}"

    lines = ["# Trend report", ""]
    filters = []
    if flt.sector:
        filters.append(f"sector={flt.sector}")
    if flt.topic:
        filters.append(f"topic={flt.topic.value}")
    if flt.tags:
        filters.append("tags=" + ",".join(flt.tags))
    lines.append(f"Filter: {'; '.join(filters) if filters else 'all incidents'}")
    lines.append("")

    lines += ["## Training objective breakdown", ""]
    breakdown = _topic_breakdown(store, flt)
    if breakdown:
        lines += ["| Topic | Incidents |", "| --- | --- |"]
        lines += [f"| {name} | {count} |" for name, count in breakdown]
    else:
        lines.append("insufficient data: no topics matched")
    lines.append("")

    for title, table in (
        ("Top attackers", stats.top_attackers),
        ("Top techniques", stats.top_techniques),
        ("Top malware", stats.top_malware),
        ("Top vulnerabilities", stats.top_vulnerabilities),
    ):
        lines += [f"## {title}", ""]
        if table:
            lines += ["| Value | Count |", "| --- | --- |"]
            lines += [f"| {value} | {count} |" for value, count in table]
        else:
            lines.append("insufficient data")
        lines.append("")

    lines += ["## Monthly series", ""]
    if series.points:
        lines += ["| Month | Count |", "| --- | --- |"]
        lines += [f"| {month.strftime('%Y-%m')} | {count} |" for month, count in series.points]
    else:
        lines.append("insufficient data")
    lines.append("")

    lines += ["## Forecast", ""]
    if forecast_points:
        lines += ["| Month | Forecast | Low | High |", "| --- | --- | --- | --- |"]
        lines += [
            f"| {point.month.strftime('%Y-%m')} | {point.value:.2f} "
            f"| {point.lo:.2f} | {point.hi:.2f} |"
            for point in forecast_points
        ]
    else:
        lines.append(note or "insufficient data")
    lines.append("")

    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["month", "count", "forecast", "lo", "hi"])
    for month, count in series.points:
        writer.writerow([month.strftime("%Y-%m"), count, "", "", ""])
    for point in forecast_points:
        writer.writerow(
            [
                point.month.strftime("%Y-%m"),
                "",
                f"{point.value:.4f}",
                f"{point.lo:.4f}",
                f"{point.hi:.4f}",
            ]
        )

    return TrendReport(
        markdown="\n".join(lines),
        csv_text=buffer.getvalue(),
        stats=stats,
        series=series,
        forecast_points=forecast_points,
        forecast_note=note,
    )
