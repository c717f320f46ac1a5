#!/usr/bin/env python3
"""Lint: the figure renderer may read, reshape and draw - never compute.

Walks the AST of render.py and rejects numeric/statistics imports and calls
to aggregation or model-fitting functions.  Every number that appears in a
figure must come from an input artifact.
"""

import ast
import sys
from pathlib import Path

BANNED_IMPORTS = {
    "numpy", "scipy", "pandas", "statistics", "math", "statsmodels", "sklearn",
}
BANNED_CALLS = {
    "mean", "average", "std", "var", "variance", "median", "sum", "polyfit",
    "lstsq", "corrcoef", "cov", "percentile", "quantile", "fit", "curve_fit",
    "regress", "histogram", "cumsum", "prod", "dot", "einsum",
}


def lint(path) -> list[str]:
    tree = ast.parse(Path(path).read_text(), filename=str(path))
    problems = []
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                root = alias.name.split(".")[0]
                if root in BANNED_IMPORTS:
                    problems.append(f"{path}:{node.lineno}: banned import {alias.name}")
        elif isinstance(node, ast.ImportFrom):
            root = (node.module or "").split(".")[0]
            if root in BANNED_IMPORTS:
                problems.append(f"{path}:{node.lineno}: banned import {node.module}")
        elif isinstance(node, ast.Call):
            name = ""
            if isinstance(node.func, ast.Name):
                name = node.func.id
            elif isinstance(node.func, ast.Attribute):
                name = node.func.attr
            if name in BANNED_CALLS:
                problems.append(f"{path}:{node.lineno}: banned computation {name}()")
    return problems


def main(argv=None) -> int:
    targets = argv if argv else [Path(__file__).parent / "render.py"]
    problems = []
    for target in targets:
        problems.extend(lint(target))
    for p in problems:
        print(p, file=sys.stderr)
    return 1 if problems else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
