"""Planted-structure datasets used by the acceptance suite.

Category rule (3 classes): class = argmax(f0, f1, f2) with
    f0 = 1.6 u0 + 0.4 sin(2 pi u2)
    f1 = 1.6 u1 + 0.4 cos(2 pi u3)
    f2 = 0.75 + 0.4 sin(pi u4) - 0.5 u0 u1
Rank rule: rank = clip(1 + 4 u0 + 3 u1^2 + 2 sin(pi u2) + N(0, 0.3^2), 0, 10).
Calibration set: the category rule with the label replaced by the runner-up
class with probability 0.45 exp(-gap / 0.08), gap = top score - runner-up.
"""

import pathlib

import numpy as np

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def scores(u):
    f0 = 1.6 * u[:, 0] + 0.4 * np.sin(2 * np.pi * u[:, 2])
    f1 = 1.6 * u[:, 1] + 0.4 * np.cos(2 * np.pi * u[:, 3])
    f2 = 0.75 + 0.4 * np.sin(np.pi * u[:, 4]) - 0.5 * u[:, 0] * u[:, 1]
    return np.stack([f0, f1, f2], axis=1)


def split_column(rng, n, n_train):
    side = np.array(["validation"] * n, dtype=object)
    side[rng.permutation(n)[:n_train]] = "train"
    return side


def write(path, side, u, category=None, rank=None):
    lines = ["split," + ",".join("u%d" % i for i in range(12)) + ",category,rank"]
    for k in range(len(u)):
        fields = [side[k]] + ["%.17g" % v for v in u[k]]
        fields.append("" if category is None else str(int(category[k])))
        fields.append("" if rank is None else "%.17g" % rank[k])
        lines.append(",".join(fields))
    path.write_text("\n".join(lines) + "\n")


def main():
    FIXTURES.mkdir(exist_ok=True)

    rng = np.random.default_rng(20240601)
    u = rng.random((600, 12))
    write(FIXTURES / "planted_categories.csv", split_column(rng, 600, 480), u, np.argmax(scores(u), axis=1))

    rng = np.random.default_rng(20240602)
    u = rng.random((625, 12))
    g = 1 + 4 * u[:, 0] + 3 * u[:, 1] ** 2 + 2 * np.sin(np.pi * u[:, 2])
    rank = np.clip(g + rng.normal(0.0, 0.3, size=625), 0.0, 10.0)
    write(FIXTURES / "planted_ranks.csv", split_column(rng, 625, 500), u, rank=rank)

    rng = np.random.default_rng(20240603)
    u = rng.random((2000, 12))
    s = scores(u)
    order = np.argsort(-s, axis=1, kind="stable")
    top, second = order[:, 0], order[:, 1]
    gap = s[np.arange(2000), top] - s[np.arange(2000), second]
    flip = rng.random(2000) < 0.45 * np.exp(-gap / 0.08)
    label = np.where(flip, second, top)
    write(FIXTURES / "planted_calibration.csv", split_column(rng, 2000, 1600), u, label)


if __name__ == "__main__":
    main()
