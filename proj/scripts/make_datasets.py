#!/usr/bin/env python3
"""Materialize the UCI benchmark CSVs (iris, wine, wdbc) from scikit-learn's
bundled copies. Run from the repo root; writes into data/."""
import os

from sklearn.datasets import load_breast_cancer, load_iris, load_wine


def write_csv(path, feature_names, X, class_names, y):
    with open(path, "w") as f:
        cols = [n.replace(" ", "_").replace("/", "_") for n in feature_names]
        f.write(",".join(cols + ["class"]) + "\n")
        for row, label in zip(X, y):
            cells = [repr(float(v)) for v in row]
            f.write(",".join(cells + [str(class_names[label])]) + "\n")


def main():
    os.makedirs("data", exist_ok=True)
    iris = load_iris()
    write_csv("data/iris.csv", iris.feature_names, iris.data,
              list(iris.target_names), iris.target)
    wine = load_wine()
    write_csv("data/wine.csv", wine.feature_names, wine.data,
              ["class_%d" % i for i in range(3)], wine.target)
    wdbc = load_breast_cancer()
    write_csv("data/wdbc.csv", wdbc.feature_names, wdbc.data,
              ["malignant", "benign"], wdbc.target)
    print("wrote data/iris.csv data/wine.csv data/wdbc.csv")


if __name__ == "__main__":
    main()
