"""Arithmetic mini-language for problem coefficients, problem assembly,
and sampled assumption validation.

Expressions are plain text over the variables t, x, y, z with the
operators + - * / ^ (caret right-associative, binding tighter than unary
minus), parentheses, and the functions max, min, abs, exp, log, sqrt,
pos (positive part) and neg (negative part).  A problem file is a JSON
document whose coefficient fields hold expression strings; its declared
constants (Lipschitz/growth/data bounds) are spot-checked on a sample
lattice by :func:`validate` -- a necessary-condition check, not a proof.
"""

import json
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import vm
from .errors import Error, ExprEvalError, ExprSyntaxError, SchemaError
from .gcalc import GCoefficients

# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

VARIABLES = ("t", "x", "y", "z")
FUNCTIONS = {
    "max": 2,
    "min": 2,
    "abs": 1,
    "exp": 1,
    "log": 1,
    "sqrt": 1,
    "pos": 1,
    "neg": 1,
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expr = Num | Var | Bin | Neg | Call


# ---------------------------------------------------------------------------
# Lexer / parser
# ---------------------------------------------------------------------------

_NUMBER = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


def _tokenize(source: str):
    tokens = []
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c in " \t\r\n":
            i += 1
            continue
        m = _NUMBER.match(source, i)
        if m:
            value = float(m.group())
            if not math.isfinite(value):
                raise ExprSyntaxError("numeric literal out of range", i, "a finite number")
            tokens.append(("num", value, i))
            i = m.end()
            continue
        m = _IDENT.match(source, i)
        if m:
            tokens.append(("ident", m.group(), i))
            i = m.end()
            continue
        if c in "+-*/^(),":
            tokens.append((c, c, i))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", i, "a number, name, or operator")
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind, expected):
        tok = self.peek()
        if tok[0] != kind:
            raise ExprSyntaxError(f"unexpected {self._describe(tok)}", tok[2], expected)
        return self.advance()

    @staticmethod
    def _describe(tok):
        if tok[0] == "end":
            return "end of input"
        return f"token {tok[1]!r}"

    # expr := term (('+'|'-') term)*
    def expr(self):
        node = self.term()
        while self.peek()[0] in "+-":
            op = self.advance()[0]
            node = Bin(op, node, self.term())
        return node

    # term := unary (('*'|'/') unary)*
    def term(self):
        node = self.unary()
        while self.peek()[0] in "*/":
            op = self.advance()[0]
            node = Bin(op, node, self.unary())
        return node

    # unary := '-' unary | power      (so -x^2 means -(x^2))
    def unary(self):
        if self.peek()[0] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    # power := atom ('^' unary)?      (right-associative)
    def power(self):
        node = self.atom()
        if self.peek()[0] == "^":
            self.advance()
            node = Bin("^", node, self.unary())
        return node

    def atom(self):
        tok = self.peek()
        if tok[0] == "num":
            self.advance()
            return Num(tok[1])
        if tok[0] == "(":
            self.advance()
            node = self.expr()
            self.expect(")", "')'")
            return node
        if tok[0] == "ident":
            self.advance()
            name = tok[1]
            if name in VARIABLES:
                return Var(name)
            if name in FUNCTIONS:
                self.expect("(", "'(' after function name")
                args = [self.expr()]
                while self.peek()[0] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")", "')'")
                arity = FUNCTIONS[name]
                if len(args) != arity:
                    raise ExprSyntaxError(
                        f"{name} takes {arity} argument(s), got {len(args)}", tok[2]
                    )
                return Call(name, tuple(args))
            raise ExprSyntaxError(
                f"unknown identifier {name!r}", tok[2], "t, x, y, z, or a function name"
            )
        raise ExprSyntaxError(
            f"unexpected {self._describe(tok)}", tok[2], "a number, variable, or '('"
        )


def parse(source) -> Expr:
    """Parse source text (str or UTF-8 bytes) into an AST.

    Every input either parses or raises :class:`ExprSyntaxError` with a
    byte offset; no other failure mode.
    """
    if isinstance(source, (bytes, bytearray)):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ExprSyntaxError("invalid UTF-8", exc.start, "valid UTF-8 text") from None
    parser = _Parser(_tokenize(source))
    node = parser.expr()
    parser.expect("end", "end of input")
    return node


# ---------------------------------------------------------------------------
# Printing, evaluation, compilation
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def to_source(e: Expr) -> str:
    """Pretty-print with minimal parentheses; reparses to an equal AST."""

    def go(node, parent_prec, is_right=False):
        if isinstance(node, Num):
            return repr(node.value) if node.value != int(node.value) else str(int(node.value))
        if isinstance(node, Var):
            return node.name
        if isinstance(node, Call):
            return f"{node.func}({', '.join(go(a, 0) for a in node.args)})"
        if isinstance(node, Neg):
            inner = go(node.operand, _PREC["neg"])
            s = f"-{inner}"
            return f"({s})" if parent_prec > _PREC["neg"] else s
        prec = _PREC[node.op]
        if node.op == "^":
            # right-assoc; left operand must outrank '^'
            s = f"{go(node.left, prec + 1)}^{go(node.right, prec, True)}"
        else:
            s = f"{go(node.left, prec)} {node.op} {go(node.right, prec + 1)}"
        return f"({s})" if prec < parent_prec else s

    return go(e, 0)


def free_variables(e: Expr) -> frozenset:
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, Bin):
        return free_variables(e.left) | free_variables(e.right)
    return frozenset().union(*(free_variables(a) for a in e.args))


def evaluate(e: Expr, env) -> float:
    """Tree-walking evaluation with precise error reporting.

    ``env`` maps variable names to floats.  Raises :class:`ExprEvalError`
    on unbound variables and on domain faults.
    """
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        if e.name not in env:
            raise ExprEvalError(f"unbound variable {e.name!r}")
        return float(env[e.name])
    if isinstance(e, Neg):
        return -evaluate(e.operand, env)
    if isinstance(e, Bin):
        a = evaluate(e.left, env)
        b = evaluate(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0.0:
                raise ExprEvalError("division by zero")
            return a / b
        # '^'
        if a < 0.0 and b != math.floor(b):
            raise ExprEvalError(f"fractional power of negative base ({a} ^ {b})")
        if a == 0.0 and b < 0.0:
            raise ExprEvalError("zero raised to a negative power")
        try:
            return a**b
        except OverflowError:
            return math.inf
    args = [evaluate(a, env) for a in e.args]
    f = e.func
    if f == "max":
        return max(args)
    if f == "min":
        return min(args)
    if f == "abs":
        return abs(args[0])
    if f == "exp":
        try:
            return math.exp(args[0])
        except OverflowError:
            return math.inf
    if f == "log":
        if args[0] <= 0.0:
            raise ExprEvalError(f"log of non-positive value {args[0]}")
        return math.log(args[0])
    if f == "sqrt":
        if args[0] < 0.0:
            raise ExprEvalError(f"sqrt of negative value {args[0]}")
        return math.sqrt(args[0])
    if f == "pos":
        return max(args[0], 0.0)
    return max(-args[0], 0.0)  # neg


_FUNC_OPS = {
    "abs": vm.OP_ABS,
    "exp": vm.OP_EXP,
    "log": vm.OP_LOG,
    "sqrt": vm.OP_SQRT,
    "pos": vm.OP_POS,
    "neg": vm.OP_NEGPART,
    "max": vm.OP_MAX,
    "min": vm.OP_MIN,
}
_BIN_OPS = {"+": vm.OP_ADD, "-": vm.OP_SUB, "*": vm.OP_MUL, "/": vm.OP_DIV, "^": vm.OP_POW}
_VAR_OPS = {"t": vm.OP_T, "x": vm.OP_X, "y": vm.OP_Y, "z": vm.OP_Z}


def compile_expr(e: Expr) -> vm.Program:
    """Flatten the AST into a postfix stack program for the kernels."""
    ops, args, consts = [], [], []

    def emit(op, arg=0):
        ops.append(op)
        args.append(arg)

    def go(node):
        if isinstance(node, Num):
            consts.append(node.value)
            emit(vm.OP_CONST, len(consts) - 1)
        elif isinstance(node, Var):
            emit(_VAR_OPS[node.name])
        elif isinstance(node, Neg):
            go(node.operand)
            emit(vm.OP_NEG)
        elif isinstance(node, Bin):
            go(node.left)
            go(node.right)
            emit(_BIN_OPS[node.op])
        else:
            for a in node.args:
                go(a)
            emit(_FUNC_OPS[node.func])

    go(e)
    depth = peak = 0
    for op in ops:
        if op in (vm.OP_CONST, *_VAR_OPS.values()):
            depth += 1
        elif op in _BIN_OPS.values() or op in (vm.OP_MAX, vm.OP_MIN):
            depth -= 1
        peak = max(peak, depth)
    return vm.Program(
        ops=np.asarray(ops, dtype=np.int64),
        args=np.asarray(args, dtype=np.int64),
        consts=np.asarray(consts, dtype=np.float64),
        max_depth=peak,
        variables=free_variables(e),
    )


# ---------------------------------------------------------------------------
# Problem assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionBounds:
    """Declared constants used by the sampled validator.

    L_y bounds the y-Lipschitz modulus of f and g; L_z the quadratic
    z-growth modulus |df| <= L_z (1+|z|+|z'|)|z-z'|; M_0 bounds the data
    (generators at (0,0) and the terminal payoff); N_0 bounds the
    obstacle from above; m is the polynomial growth exponent of the
    terminal payoff; sigma_sq_range is the admissible [eps, K] band for
    sigma(t,x)^2.
    """

    L_y: float
    L_z: float
    M_0: float
    N_0: float
    m: int = 1
    sigma_sq_range: tuple = (1e-8, 1e8)

    def __post_init__(self):
        for name in ("L_y", "L_z", "M_0", "N_0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise SchemaError(f"bound {name} must be finite and nonnegative, got {v}")
        if self.m < 0:
            raise SchemaError("growth exponent m must be nonnegative")
        eps, big = self.sigma_sq_range
        if not 0 < eps <= big:
            raise SchemaError("sigma_sq_range must satisfy 0 < eps <= K")


_EXPR_SCOPES = {
    "b": {"t", "x"},
    "h": {"t", "x"},
    "sigma": {"t", "x"},
    "f": {"t", "x", "y", "z"},
    "g": {"t", "x", "y", "z"},
    "phi": {"x"},
    "obstacle": {"t", "x"},
}


@dataclass(frozen=True)
class Problem:
    """A terminal-value problem on the band, optionally with a lower
    obstacle, together with its declared bounds and truncation box."""

    T: float
    coeffs: GCoefficients
    b: Expr
    h: Expr
    sigma: Expr
    f: Expr
    g: Expr
    phi: Expr
    obstacle: Expr | None
    bounds: AssumptionBounds
    x_lo: float
    x_hi: float
    x0: float = None  # defaults to the box midpoint
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise SchemaError(f"horizon T must be positive, got {self.T}")
        if not (math.isfinite(self.x_lo) and math.isfinite(self.x_hi) and self.x_lo < self.x_hi):
            raise SchemaError("domain must satisfy x_lo < x_hi")
        if self.x0 is None:
            object.__setattr__(self, "x0", 0.5 * (self.x_lo + self.x_hi))
        if not self.x_lo <= self.x0 <= self.x_hi:
            raise SchemaError("x0 must lie inside the domain")
        for name, scope in _EXPR_SCOPES.items():
            e = getattr(self, name)
            if e is None:
                continue
            extra = free_variables(e) - scope
            if extra:
                raise SchemaError(
                    f"coefficient {name!r} may only use {sorted(scope)}, "
                    f"found {sorted(extra)}"
                )

    @property
    def has_obstacle(self) -> bool:
        return self.obstacle is not None

    def program(self, name: str) -> vm.Program:
        if name not in self._cache:
            e = getattr(self, name)
            if e is None:
                e = Num(0.0)
            self._cache[name] = compile_expr(e)
        return self._cache[name]

    def program_pack(self) -> vm.ProgramPack:
        """Programs for (b, h, sigma, f, g, obstacle, phi) in kernel slot order."""
        if "pack" not in self._cache:
            names = ("b", "h", "sigma", "f", "g", "obstacle", "phi")
            self._cache["pack"] = vm.pack_programs([self.program(n) for n in names])
        return self._cache["pack"]

    def with_shifted(self, deltas: dict) -> "Problem":
        """Copy with named coefficients shifted by additive constants.

        Used to build ordered problem pairs; bounds are widened by the
        shift magnitudes so validation still passes.
        """
        updates = {}
        total = 0.0
        for name, delta in deltas.items():
            if name not in ("phi", "f", "g", "obstacle"):
                raise SchemaError(f"cannot shift coefficient {name!r}")
            base = getattr(self, name)
            if base is None:
                raise SchemaError(f"problem has no {name!r} to shift")
            updates[name] = Bin("+", base, Num(float(delta)))
            total += abs(float(delta))
        b = self.bounds
        updates["bounds"] = replace(b, M_0=b.M_0 + total, N_0=b.N_0 + total)
        updates["_cache"] = {}
        return replace(self, **updates)


# Slot indices in Problem.program_pack(), shared with the kernels.
SLOT_B, SLOT_H, SLOT_SIGMA, SLOT_F, SLOT_G, SLOT_L, SLOT_PHI = range(7)


_TOP_KEYS = {
    "T", "sigma_low", "sigma_high", "b", "h", "sigma", "f", "g",
    "phi", "obstacle", "domain", "x0", "bounds",
}
_BOUND_KEYS = {"L_y", "L_z", "M_0", "N_0", "m", "sigma_sq_range"}


def problem_from_dict(doc: dict) -> Problem:
    """Build a Problem from a parsed JSON document; unknown keys rejected."""
    if not isinstance(doc, dict):
        raise SchemaError("problem document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise SchemaError(f"unknown problem keys: {sorted(unknown)}")
    missing = {"T", "sigma_low", "sigma_high", "phi", "domain", "bounds"} - set(doc)
    if missing:
        raise SchemaError(f"missing problem keys: {sorted(missing)}")

    def expr_of(key, default=None):
        if key not in doc or doc[key] is None:
            return parse(default) if default is not None else None
        if not isinstance(doc[key], str):
            raise SchemaError(f"field {key!r} must be an expression string")
        try:
            return parse(doc[key])
        except ExprSyntaxError as exc:
            raise SchemaError(f"field {key!r}: {exc}") from None

    dom = doc["domain"]
    if isinstance(dom, dict):
        unknown = set(dom) - {"x_lo", "x_hi"}
        if unknown:
            raise SchemaError(f"unknown domain keys: {sorted(unknown)}")
        x_lo, x_hi = dom.get("x_lo"), dom.get("x_hi")
    elif isinstance(dom, (list, tuple)) and len(dom) == 2:
        x_lo, x_hi = dom
    else:
        raise SchemaError("domain must be [x_lo, x_hi] or {x_lo, x_hi}")

    braw = doc["bounds"]
    if not isinstance(braw, dict):
        raise SchemaError("bounds must be an object")
    unknown = set(braw) - _BOUND_KEYS
    if unknown:
        raise SchemaError(f"unknown bounds keys: {sorted(unknown)}")
    bkw = dict(braw)
    if "sigma_sq_range" in bkw:
        rng = bkw["sigma_sq_range"]
        if not (isinstance(rng, (list, tuple)) and len(rng) == 2):
            raise SchemaError("sigma_sq_range must be [eps, K]")
        bkw["sigma_sq_range"] = (float(rng[0]), float(rng[1]))
    if doc.get("phi") is None:
        raise SchemaError("field 'phi' must be an expression string")
    try:
        bounds = AssumptionBounds(**{k: (int(v) if k == "m" else v) for k, v in bkw.items()})
        coeffs = GCoefficients(float(doc["sigma_low"]), float(doc["sigma_high"]))
        return Problem(
            T=float(doc["T"]),
            coeffs=coeffs,
            b=expr_of("b", "0"),
            h=expr_of("h", "0"),
            sigma=expr_of("sigma", "1"),
            f=expr_of("f", "0"),
            g=expr_of("g", "0"),
            phi=expr_of("phi"),
            obstacle=expr_of("obstacle"),
            bounds=bounds,
            x_lo=float(x_lo),
            x_hi=float(x_hi),
            x0=float(doc["x0"]) if "x0" in doc and doc["x0"] is not None else None,
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"malformed problem document: {exc}") from None
    except Error:
        raise


def load_problem(path) -> Problem:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return problem_from_dict(doc)


# ---------------------------------------------------------------------------
# Sampled validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    witness: dict | None = None


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self):
        out = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            line = f"[{status}] {c.name}: {c.detail}"
            if c.witness:
                parts = ", ".join(f"{k}={v:.6g}" for k, v in c.witness.items())
                line += f"  (worst at {parts})"
            out.append(line)
        return out


_TOL = 1e-9


def _worst(values, axes):
    """Index of the largest entry plus its coordinates along ``axes``."""
    flat = int(np.nanargmax(values))
    idx = np.unravel_index(flat, values.shape)
    return {name: float(ax[i]) for (name, ax), i in zip(axes, idx)}, float(values[idx])


def validate(problem: Problem, sample_density: int = 9) -> ValidationReport:
    """Spot-check the declared assumption bounds on a sample lattice.

    Samples ``sample_density`` points per axis over the truncation box,
    [0, T], and bounded y/z ranges, and checks: data bounds against M_0;
    the sigma^2 band; obstacle bounds (below N_0, below the terminal
    payoff at T); and empirical difference quotients of f and g against
    L_y and L_z(1+|z|+|z'|).  Failures are report entries, never
    exceptions.
    """
    if sample_density < 2:
        raise Error("sample_density must be >= 2 per axis")
    p, bnd = problem, problem.bounds
    d = sample_density
    ts = np.linspace(0.0, p.T, d)
    xs = np.linspace(p.x_lo, p.x_hi, d)
    ys = np.linspace(-(bnd.M_0 + 1.0), bnd.M_0 + 1.0, d)
    zs = np.linspace(-2.0, 2.0, d)
    tg, xg = np.meshgrid(ts, xs, indexing="ij")
    checks = []

    def run(prog, **kw):
        return vm.eval_vector(prog, **kw)

    # Coefficients must evaluate to finite values everywhere sampled.
    finite_ok = True
    finite_detail = "all coefficients finite on the sample lattice"
    witness = None
    for name in ("b", "h", "sigma", "obstacle"):
        if getattr(p, name) is None:
            continue
        vals = run(p.program(name), t=tg, x=xg)
        if not np.all(np.isfinite(vals)):
            finite_ok = False
            bad = np.unravel_index(int(np.argmin(np.isfinite(vals))), vals.shape)
            witness = {"t": float(tg[bad]), "x": float(xg[bad])}
            finite_detail = f"coefficient {name!r} not finite"
            break
    phi_vals = run(p.program("phi"), x=xs)
    if finite_ok and not np.all(np.isfinite(phi_vals)):
        finite_ok = False
        finite_detail = "terminal payoff not finite"
        witness = {"x": float(xs[int(np.argmin(np.isfinite(phi_vals)))])}
    checks.append(CheckResult("EVAL finite", finite_ok, finite_detail, witness))

    if finite_ok:
        # Data bound: |f(t,x,0,0)|, |g(t,x,0,0)|, |phi| <= M_0.
        worst_val = -np.inf
        worst_w = None
        for name in ("f", "g"):
            vals = np.abs(np.broadcast_to(run(p.program(name), t=tg, x=xg), tg.shape))
            w, v = _worst(vals, [("t", ts), ("x", xs)])
            if v > worst_val:
                worst_val, worst_w = v, w
        w, v = _worst(np.abs(np.broadcast_to(phi_vals, xs.shape)), [("x", xs)])
        if v > worst_val:
            worst_val, worst_w = v, w
        ok = worst_val <= bnd.M_0 + _TOL
        checks.append(
            CheckResult(
                "H1 data bound",
                bool(ok),
                f"max(|f(.,0,0)|, |g(.,0,0)|, |phi|) = {worst_val:.6g} vs M_0 = {bnd.M_0:.6g}",
                worst_w,
            )
        )

        # Volatility band: sigma^2 in [eps, K].
        sig2 = np.broadcast_to(run(p.program("sigma"), t=tg, x=xg) ** 2, tg.shape)
        eps, big = bnd.sigma_sq_range
        low_w, low_v = _worst(-sig2, [("t", ts), ("x", xs)])
        high_w, high_v = _worst(sig2, [("t", ts), ("x", xs)])
        ok = (-low_v >= eps - _TOL) and (high_v <= big + _TOL)
        checks.append(
            CheckResult(
                "A4 sigma band",
                bool(ok),
                f"sigma^2 in [{-low_v:.6g}, {high_v:.6g}] vs declared [{eps:.3g}, {big:.3g}]",
                low_w if -low_v < eps else high_w if high_v > big else None,
            )
        )

        # Obstacle: l <= N_0 and l(T, .) <= phi.
        if p.has_obstacle:
            lv = np.broadcast_to(run(p.program("obstacle"), t=tg, x=xg), tg.shape)
            w, v = _worst(lv, [("t", ts), ("x", xs)])
            ok = v <= bnd.N_0 + _TOL
            checks.append(
                CheckResult(
                    "A9 obstacle bound",
                    bool(ok),
                    f"max l = {v:.6g} vs N_0 = {bnd.N_0:.6g}",
                    w if not ok else None,
                )
            )
            lT = np.broadcast_to(run(p.program("obstacle"), t=p.T, x=xs), xs.shape)
            gap = lT - np.broadcast_to(phi_vals, xs.shape)
            w, v = _worst(gap, [("x", xs)])
            ok = v <= _TOL
            checks.append(
                CheckResult(
                    "A9 terminal consistency",
                    bool(ok),
                    f"max(l(T,x) - phi(x)) = {v:.6g} (must be <= 0)",
                    w if not ok else None,
                )
            )

        # Difference quotients of f and g in y and in z.
        ty, xy = p.T * 0.5, xs[d // 2]
        for name in ("f", "g"):
            prog = p.program(name)
            # y-direction at z fixed over the z sample
            yg1, yg2, zg = np.meshgrid(ys[:-1], ys[1:], zs, indexing="ij")
            f1 = np.broadcast_to(run(prog, t=ty, x=xy, y=yg1, z=zg), yg1.shape)
            f2 = np.broadcast_to(run(prog, t=ty, x=xy, y=yg2, z=zg), yg1.shape)
            dy = np.abs(yg2 - yg1)
            excess = np.abs(f1 - f2) - bnd.L_y * dy
            mask = dy > 0
            excess = np.where(mask, excess / np.maximum(dy, 1e-300), -np.inf)
            w, v = _worst(excess, [("y", ys[:-1]), ("y2", ys[1:]), ("z", zs)])
            ok = v <= _TOL
            checks.append(
                CheckResult(
                    f"H3 y-Lipschitz of {name}",
                    bool(ok),
                    f"max |d{name}/dy| excess over L_y = {max(v, 0.0):.6g}",
                    w if not ok else None,
                )
            )
            # z-direction
            zg1, zg2, yg = np.meshgrid(zs[:-1], zs[1:], ys, indexing="ij")
            f1 = np.broadcast_to(run(prog, t=ty, x=xy, y=yg, z=zg1), zg1.shape)
            f2 = np.broadcast_to(run(prog, t=ty, x=xy, y=yg, z=zg2), zg1.shape)
            dz = np.abs(zg2 - zg1)
            allowed = bnd.L_z * (1.0 + np.abs(zg1) + np.abs(zg2)) * dz
            excess = np.where(dz > 0, (np.abs(f1 - f2) - allowed) / np.maximum(dz, 1e-300), -np.inf)
            w, v = _worst(excess, [("z", zs[:-1]), ("z2", zs[1:]), ("y", ys)])
            ok = v <= _TOL
            checks.append(
                CheckResult(
                    f"H3 z-growth of {name}",
                    bool(ok),
                    f"max |d{name}/dz| excess over L_z(1+|z|+|z'|) = {max(v, 0.0):.6g}",
                    w if not ok else None,
                )
            )

    return ValidationReport(checks=tuple(checks))
