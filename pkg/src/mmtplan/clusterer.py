"""Language grouping by deterministic complete-linkage clustering.

The dissimilarity signal is user-supplied as a matrix file; this module
only partitions.  Tie-breaking and group naming are fully specified so
that results are bit-identical across platforms and input orderings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import check_language


@dataclass(frozen=True)
class LanguageDistanceMatrix:
    languages: tuple[str, ...]
    d: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        n = len(self.languages)
        if len(set(self.languages)) != n:
            raise ValueError("duplicate language in distance matrix")
        for lang in self.languages:
            check_language(lang)
        if len(self.d) != n or any(len(row) != n for row in self.d):
            raise ValueError("distance matrix is not square")
        for i in range(n):
            if self.d[i][i] != 0.0:
                raise ValueError("distance matrix diagonal must be zero")
            for j in range(n):
                v = self.d[i][j]
                if not math.isfinite(v) or v < 0:
                    raise ValueError("distances must be finite and non-negative")
                if v != self.d[j][i]:
                    raise ValueError("distance matrix must be symmetric")

    def dist(self, a: str, b: str) -> float:
        i = self.languages.index(a)
        j = self.languages.index(b)
        return self.d[i][j]


def load_distance_matrix(path: str) -> LanguageDistanceMatrix:
    """Read a matrix file: a header row of language codes followed by a
    dense whitespace-separated numeric matrix."""
    with open(path) as f:
        rows = [line.split() for line in f if line.strip()]
    if not rows:
        raise ValueError(f"empty distance matrix file: {path}")
    languages = tuple(rows[0])
    data = tuple(tuple(float(x) for x in row) for row in rows[1:])
    return LanguageDistanceMatrix(languages, data)


def cluster_languages(m: LanguageDistanceMatrix, k: int) -> dict[str, str]:
    """Agglomerative complete-linkage clustering down to k groups.

    Merge order: smallest complete-linkage distance first; ties broken by
    the lexicographically smallest pair of cluster minimum members.  Group
    names group0..group{k-1} follow the ascending order of each cluster's
    smallest member, so the output is independent of input ordering.
    """
    langs = sorted(m.languages)
    if not 1 <= k <= len(langs):
        raise ValueError(f"k={k} out of range for {len(langs)} languages")

    clusters: list[list[str]] = [[lang] for lang in langs]
    while len(clusters) > k:
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                linkage = max(
                    m.dist(a, b) for a in clusters[i] for b in clusters[j]
                )
                pair = tuple(sorted((clusters[i][0], clusters[j][0])))
                cand = (linkage, pair, i, j)
                if best is None or cand[:2] < best[:2]:
                    best = cand
        _, _, i, j = best
        merged = sorted(clusters[i] + clusters[j])
        clusters = [c for idx, c in enumerate(clusters) if idx not in (i, j)]
        clusters.append(merged)
        # keep clusters ordered by smallest member for deterministic scans
        clusters.sort(key=lambda c: c[0])

    clusters.sort(key=lambda c: c[0])
    assignment: dict[str, str] = {}
    for idx, cluster in enumerate(clusters):
        for lang in cluster:
            assignment[lang] = f"group{idx}"
    return assignment
