"""Independent brute-force oracles, kept deliberately separate from the
package's solver paths.

The quartic OLS oracle solves the 5x5 normal equations in exact rational
arithmetic, so it returns the least-squares solution for the given float
inputs with no rounding of its own. The simple-regression oracle
evaluates the textbook closed forms, also exactly.
"""

from fractions import Fraction


def solve_exact(matrix, rhs):
    """Gaussian elimination over Fractions (exact, partial pivoting)."""
    n = len(rhs)
    aug = [list(row) + [rhs[i]] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(aug[r][col]))
        if aug[pivot][col] == 0:
            raise ZeroDivisionError("singular system")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        for row in range(n):
            if row != col and aug[row][col] != 0:
                factor = aug[row][col] / aug[col][col]
                aug[row] = [a - factor * b for a, b in zip(aug[row], aug[col])]
    return [aug[i][n] / aug[i][i] for i in range(n)]


def quartic_ols_exact(counts):
    """Exact least-squares quartic coefficients on weeks 1..52."""
    assert len(counts) == 52
    design = [[Fraction(week) ** power for power in range(5)]
              for week in range(1, 53)]
    y = [Fraction(float(value)) for value in counts]
    xtx = [[sum(design[i][r] * design[i][c] for i in range(52))
            for c in range(5)] for r in range(5)]
    xty = [sum(design[i][r] * y[i] for i in range(52)) for r in range(5)]
    return [float(value) for value in solve_exact(xtx, xty)]


def simple_line_exact(xs, ys):
    """Closed-form simple regression slope and intercept, exactly."""
    n = len(xs)
    xs = [Fraction(float(x)) for x in xs]
    ys = [Fraction(float(y)) for y in ys]
    sx = sum(xs)
    sy = sum(ys)
    sxx = sum(x * x for x in xs)
    sxy = sum(x * y for x, y in zip(xs, ys))
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    intercept = (sy - slope * sx) / n
    return float(slope), float(intercept)
