"""Built-in analysis plugins executed inside the kernel.

Cells call these by bare name with the loaded dataframe; figures land in
the current working directory, which the kernel pins to the session
workspace.
"""

from __future__ import annotations

from collections import Counter

_STOPWORDS = frozenset(
    """a an and are as at be but by for from has have i if in into is it its
    me my no not of on or our so that the their them they this to was we were
    what when which who will with you your""".split()
)


def _topic_lists(series):
    for value in series.fillna(""):
        if isinstance(value, (list, tuple)):
            yield [str(t).strip() for t in value if str(t).strip()]
        else:
            yield [t.strip() for t in str(value).split(";") if t.strip()]


def issue_river(
    df,
    topic_column: str = "topics",
    time_column: str = "timestamp",
    top_n: int = 7,
    output: str = "issue_river.png",
):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import pandas as pd

    frame = df[[time_column, topic_column]].copy()
    frame["_topics"] = list(_topic_lists(frame[topic_column]))
    frame = frame.explode("_topics").dropna(subset=["_topics"])
    frame["_when"] = pd.to_datetime(frame[time_column], utc=True, format="mixed")
    top = frame["_topics"].value_counts().head(top_n).index.tolist()
    frame = frame[frame["_topics"].isin(top)]
    counts = (
        frame.groupby([pd.Grouper(key="_when", freq="W"), "_topics"])
        .size()
        .unstack(fill_value=0)
        .sort_index()
    )
    fig, ax = plt.subplots(figsize=(10, 5))
    ax.stackplot(
        counts.index,
        [counts[c] for c in counts.columns],
        labels=list(counts.columns),
        baseline="wiggle",
    )
    ax.legend(loc="upper left", fontsize=8)
    ax.set_xlabel("week")
    ax.set_ylabel("mentions")
    ax.set_title(f"Issue river of the top {len(counts.columns)} topics")
    fig.autofmt_xdate()
    fig.savefig(output, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return output


def word_cloud(df, text_column: str = "text", output: str = "word_cloud.png"):
    import math
    import random

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    counts: Counter = Counter()
    for text in df[text_column].fillna(""):
        for token in str(text).lower().split():
            token = token.strip(".,:;!?()[]\"'")
            if token and token not in _STOPWORDS and not token.isdigit():
                counts[token] += 1
    top = counts.most_common(60)
    fig, ax = plt.subplots(figsize=(10, 6))
    ax.axis("off")
    if top:
        biggest = top[0][1]
        rng = random.Random(0)
        cols = 6
        for i, (word, freq) in enumerate(top):
            size = 8 + 28 * math.sqrt(freq / biggest)
            x = (i % cols) / cols + rng.uniform(0.0, 0.08)
            y = 1.0 - (i // cols) / math.ceil(len(top) / cols) - rng.uniform(0.02, 0.1)
            ax.text(x, y, word, fontsize=size, transform=ax.transAxes)
    fig.savefig(output, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return output
