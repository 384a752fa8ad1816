import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from ProtectionHub.utils.logging_utils import log_message  # noqa: E402

PLOT_COLUMNS = ("time_s", "confidence", "alert", "trip", "events")
EVENT_COLORS = {"CT_ATTACK": "tab:orange", "SLG_FAULT": "tab:red"}


class PlotError(Exception):
    pass


def read_trace(trace_csv):
    try:
        trace = pd.read_csv(trace_csv, keep_default_na=False, na_values=[""])
    except FileNotFoundError as e:
        raise PlotError(f"Trace file not found: {trace_csv}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise PlotError(f"Malformed trace CSV {trace_csv}: {e}") from e
    for column in PLOT_COLUMNS:
        if column not in trace.columns:
            raise PlotError(f"Trace CSV {trace_csv} is missing column '{column}'")
    try:
        trace["time_s"] = pd.to_numeric(trace["time_s"])
        trace["confidence"] = pd.to_numeric(trace["confidence"])
    except ValueError as e:
        raise PlotError(f"Malformed trace CSV {trace_csv}: {e}") from e
    trace["events"] = trace["events"].fillna("").astype(str)
    return trace


def event_spans(trace):
    """(label, start, end) for every contiguous run of windows carrying an event label."""
    spans = []
    open_spans = {}
    times = trace["time_s"].to_numpy()
    for t, cell in zip(times, trace["events"]):
        labels = set(filter(None, cell.split("|")))
        for label in labels:
            if label not in open_spans:
                open_spans[label] = [t, t]
            open_spans[label][1] = t
        for label in [l for l in open_spans if l not in labels]:
            start, end = open_spans.pop(label)
            spans.append((label, start, end))
    for label, (start, end) in open_spans.items():
        spans.append((label, start, end))
    return sorted(spans, key=lambda span: (span[1], span[0]))


def emit_plot(trace_csv, svg_path=None, c_min=0.8, title=None):
    """Render confidence vs time with the c_min line, event shading and decision markers."""
    trace = read_trace(trace_csv)
    svg_path = svg_path or os.path.splitext(trace_csv)[0] + ".svg"

    fig, ax = plt.subplots(figsize=(10, 4))
    seen = set()
    for label, start, end in event_spans(trace):
        kind = label.split("[", 1)[0]
        ax.axvspan(start, end, color=EVENT_COLORS.get(kind, "tab:gray"), alpha=0.15,
                   label=kind if kind not in seen else None)
        seen.add(kind)
    ax.plot(trace["time_s"], trace["confidence"], color="tab:blue", linewidth=0.8, label="confidence")
    ax.axhline(c_min, color="black", linestyle="--", linewidth=0.8, label=f"c_min = {c_min:g}")

    for column, marker, color in (("alert", "^", "tab:orange"), ("trip", "v", "tab:red")):
        hits = trace[pd.to_numeric(trace[column], errors="coerce").fillna(0) > 0]
        if len(hits):
            ax.scatter(hits["time_s"], hits["confidence"], marker=marker, color=color, zorder=3,
                       label=column.upper())

    ax.set_xlabel("time (s)")
    ax.set_ylabel("confidence")
    ax.set_ylim(-0.05, 1.05)
    ax.grid(True, alpha=0.3)
    ax.set_title(title or os.path.basename(os.path.dirname(os.path.abspath(trace_csv))))
    ax.legend(loc="lower left", fontsize="small")
    fig.tight_layout()
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    log_message(f"Wrote confidence plot to {svg_path}", level="INFO")
    return svg_path
