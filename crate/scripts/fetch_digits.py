#!/usr/bin/env python3
"""Regenerate data/digits.csv.

The file is the classic 8x8 handwritten-digits dataset distributed with
scikit-learn (sklearn.datasets.load_digits), which is itself derived from the
UCI ML "Optical Recognition of Handwritten Digits" test set (public domain):
1797 samples, 64 integer pixel intensities in [0, 16], labels 0-9.

Output format: one row per sample, 64 comma-separated feature values followed
by the integer label, no header. The file is committed to the repository so
builds and tests need no network access; run this script only to re-derive it.
"""

from pathlib import Path

from sklearn.datasets import load_digits


def main() -> None:
    out = Path(__file__).resolve().parent.parent / "data" / "digits.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    digits = load_digits()
    with out.open("w") as fh:
        for row, label in zip(digits.data, digits.target):
            fields = [str(int(v)) for v in row]
            fields.append(str(int(label)))
            fh.write(",".join(fields) + "\n")
    print(f"wrote {out} ({len(digits.target)} rows)")


if __name__ == "__main__":
    main()
