"""Stack-program representation of coefficient expressions.

Parsed expressions are compiled once into a flat postfix program (an
opcode array, an argument array, and a constant pool).  The same program
feeds two evaluators: a vectorised numpy interpreter (below) used by the
fallback kernels and the validation sampler, and a scalar interpreter
jitted inside ``_kernels`` for the numba path.

Domain faults (division by zero, log/sqrt outside their domain,
fractional powers of negatives) evaluate to NaN here; the solvers treat
any non-finite layer as divergence.  The user-facing tree evaluator in
``coeffexpr`` raises precise errors instead.
"""

from dataclasses import dataclass

import numpy as np

# Opcodes.  PUSH_CONST uses args[k] as an index into the constant pool;
# all other args entries are ignored.
OP_CONST = 0
OP_T = 1
OP_X = 2
OP_Y = 3
OP_Z = 4
OP_ADD = 5
OP_SUB = 6
OP_MUL = 7
OP_DIV = 8
OP_POW = 9
OP_NEG = 10
OP_MAX = 11
OP_MIN = 12
OP_ABS = 13
OP_EXP = 14
OP_LOG = 15
OP_SQRT = 16
OP_POS = 17
OP_NEGPART = 18

_UNARY = (OP_NEG, OP_ABS, OP_EXP, OP_LOG, OP_SQRT, OP_POS, OP_NEGPART)
_BINARY = (OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW, OP_MAX, OP_MIN)

STACK_LIMIT = 64


@dataclass(frozen=True)
class Program:
    ops: np.ndarray  # int64
    args: np.ndarray  # int64, parallel to ops
    consts: np.ndarray  # float64 pool
    max_depth: int
    variables: frozenset

    def __post_init__(self):
        if self.max_depth > STACK_LIMIT:
            raise ValueError(f"expression too deep (stack {self.max_depth})")


def _safe_pow(a, b):
    with np.errstate(all="ignore"):
        out = np.power(a, b)
        bad = ((a < 0) & (np.mod(b, 1.0) != 0)) | ((a == 0) & (b < 0))
    return np.where(bad, np.nan, out)


def eval_vector(prog: Program, t=0.0, x=0.0, y=0.0, z=0.0):
    """Evaluate ``prog`` with numpy broadcasting over the inputs.

    Inputs may be scalars or mutually broadcastable arrays.  Returns an
    array of the broadcast shape (0-d for all-scalar input).  Faults
    become NaN.
    """
    stack = [None] * (prog.max_depth + 1)
    sp = 0
    ops, args, consts = prog.ops, prog.args, prog.consts
    with np.errstate(all="ignore"):
        for k in range(ops.size):
            op = ops[k]
            if op == OP_CONST:
                stack[sp] = consts[args[k]]
                sp += 1
            elif op == OP_T:
                stack[sp] = np.asarray(t, dtype=np.float64)
                sp += 1
            elif op == OP_X:
                stack[sp] = np.asarray(x, dtype=np.float64)
                sp += 1
            elif op == OP_Y:
                stack[sp] = np.asarray(y, dtype=np.float64)
                sp += 1
            elif op == OP_Z:
                stack[sp] = np.asarray(z, dtype=np.float64)
                sp += 1
            elif op in _BINARY:
                b = stack[sp - 1]
                a = stack[sp - 2]
                sp -= 1
                if op == OP_ADD:
                    r = a + b
                elif op == OP_SUB:
                    r = a - b
                elif op == OP_MUL:
                    r = a * b
                elif op == OP_DIV:
                    r = np.where(np.asarray(b) == 0, np.nan, a / np.where(np.asarray(b) == 0, 1.0, b))
                elif op == OP_POW:
                    r = _safe_pow(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
                elif op == OP_MAX:
                    r = np.maximum(a, b)
                else:
                    r = np.minimum(a, b)
                stack[sp - 1] = r
            else:
                v = np.asarray(stack[sp - 1], dtype=np.float64)
                if op == OP_NEG:
                    r = -v
                elif op == OP_ABS:
                    r = np.abs(v)
                elif op == OP_EXP:
                    r = np.exp(v)
                elif op == OP_LOG:
                    r = np.where(v > 0, np.log(np.where(v > 0, v, 1.0)), np.nan)
                elif op == OP_SQRT:
                    r = np.where(v >= 0, np.sqrt(np.abs(v)), np.nan)
                elif op == OP_POS:
                    r = np.maximum(v, 0.0)
                else:  # OP_NEGPART
                    r = np.maximum(-v, 0.0)
                stack[sp - 1] = r
    return np.asarray(stack[0], dtype=np.float64)


def eval_scalar(prog: Program, t=0.0, x=0.0, y=0.0, z=0.0) -> float:
    """Scalar convenience wrapper around :func:`eval_vector`."""
    return float(eval_vector(prog, t, x, y, z))


@dataclass
class ProgramPack:
    """Several programs concatenated into flat arrays for kernel calls.

    ``args`` entries of PUSH_CONST index the shared constant pool, so a
    kernel only needs (ops, args, consts, offsets).
    """

    ops: np.ndarray
    args: np.ndarray
    consts: np.ndarray
    offsets: np.ndarray  # int64, len = n_programs + 1
    depths: np.ndarray  # int64 per program

    def __post_init__(self):
        self._views = {}

    def program(self, i: int) -> Program:
        """Per-slot Program view for the vectorised evaluator."""
        if i not in self._views:
            lo, hi = self.offsets[i], self.offsets[i + 1]
            self._views[i] = Program(
                ops=self.ops[lo:hi],
                args=self.args[lo:hi],
                consts=self.consts,
                max_depth=int(self.depths[i]),
                variables=frozenset(),
            )
        return self._views[i]


def pack_programs(programs) -> ProgramPack:
    ops, args, consts, offsets, depths = [], [], [], [0], []
    base = 0
    for p in programs:
        a = p.args.copy()
        a[p.ops == OP_CONST] += base
        ops.append(p.ops)
        args.append(a)
        consts.append(p.consts)
        depths.append(p.max_depth)
        base += p.consts.size
        offsets.append(offsets[-1] + p.ops.size)
    return ProgramPack(
        ops=np.concatenate(ops) if ops else np.zeros(0, np.int64),
        args=np.concatenate(args) if args else np.zeros(0, np.int64),
        consts=np.concatenate(consts) if consts else np.zeros(0, np.float64),
        offsets=np.asarray(offsets, dtype=np.int64),
        depths=np.asarray(depths, dtype=np.int64),
    )
