"""Closed-form coefficient expressions: parser, evaluator, printer.

The grammar is deliberately small: numbers, the variables x1..xd and t,
unary minus, sin/cos/exp/sqrt, the binary operators + - * / and ^ with an
integer-literal exponent.  Precedence from strongest to weakest:

    ^   unary -   * /   + -

Parsing is whitespace-insensitive and deterministic; errors carry the byte
offset of the offending token.  Evaluation is vectorized over numpy arrays
of points and turns any NaN/Inf, division by zero or negative sqrt into an
EvalError instead of propagating silent non-finite values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "sqrt")


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class EvalError(ValueError):
    """Raised when evaluation leaves the function's domain or overflows."""


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str  # "t" or "x<k>"
    axis: int  # 0 for t, k >= 1 for x_k


@dataclass(frozen=True)
class Neg:
    arg: "Ast"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Ast"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Ast"
    right: "Ast"


@dataclass(frozen=True)
class Pow:
    base: "Ast"
    exponent: int


Ast = Num | Var | Neg | Call | BinOp | Pow


# ---------------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------------

_OPS = set("+-*/^()")


@dataclass(frozen=True)
class _Token:
    kind: str  # num ident op end
    text: str
    offset: int


def _byte_offset(src: str, pos: int) -> int:
    return len(src[:pos].encode("utf-8"))


def _tokenize(src: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _OPS:
            tokens.append(_Token("op", ch, _byte_offset(src, i)))
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            while j < n and (src[j].isdigit() or src[j] == "."):
                j += 1
            if j < n and src[j] in "eE":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    j = k
                    while j < n and src[j].isdigit():
                        j += 1
            text = src[i:j]
            try:
                float(text)
            except ValueError:
                raise ExprSyntaxError(f"bad number literal {text!r}", _byte_offset(src, i))
            tokens.append(_Token("num", text, _byte_offset(src, i)))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            tokens.append(_Token("ident", src[i:j], _byte_offset(src, i)))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character {ch!r}", _byte_offset(src, i))
    tokens.append(_Token("end", "", _byte_offset(src, n)))
    return tokens


# ---------------------------------------------------------------------------
# recursive-descent parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str) -> None:
        tok = self.take()
        if tok.kind != "op" or tok.text != op:
            raise ExprSyntaxError(f"expected {op!r}, got {tok.text!r}", tok.offset)

    def parse(self) -> Ast:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected trailing input {tok.text!r}", tok.offset)
        return node

    def expr(self) -> Ast:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Ast:
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Ast:
        if self.peek().kind == "op" and self.peek().text == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Ast:
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            sign = 1
            if self.peek().kind == "op" and self.peek().text == "-":
                self.take()
                sign = -1
            tok = self.take()
            if tok.kind != "num" or any(c in tok.text for c in ".eE"):
                raise ExprSyntaxError("exponent must be an integer literal", tok.offset)
            return Pow(base, sign * int(tok.text))
        return base

    def atom(self) -> Ast:
        tok = self.take()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "ident":
            name = tok.text
            if name == "t":
                return Var("t", 0)
            if name.startswith("x") and name[1:].isdigit():
                axis = int(name[1:])
                if axis < 1:
                    raise ExprSyntaxError(f"bad variable {name!r}", tok.offset)
                return Var(name, axis)
            if name in FUNCTIONS:
                nxt = self.peek()
                if not (nxt.kind == "op" and nxt.text == "("):
                    raise ExprSyntaxError(f"function {name!r} needs one argument", nxt.offset)
                self.take()
                arg = self.expr()
                self.expect_op(")")
                return Call(name, arg)
            raise ExprSyntaxError(f"unknown identifier {name!r}", tok.offset)
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExprSyntaxError(f"unexpected token {tok.text or 'end of input'!r}", tok.offset)


def parse(source: str) -> Ast:
    """Parse an expression source string into its AST."""
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# analysis helpers
# ---------------------------------------------------------------------------


def max_axis(ast: Ast) -> int:
    if isinstance(ast, Var):
        return ast.axis
    if isinstance(ast, Num):
        return 0
    if isinstance(ast, Neg):
        return max_axis(ast.arg)
    if isinstance(ast, Call):
        return max_axis(ast.arg)
    if isinstance(ast, Pow):
        return max_axis(ast.base)
    return max(max_axis(ast.left), max_axis(ast.right))


def validate_dimension(ast: Ast, d: int) -> None:
    axis = max_axis(ast)
    if axis > d:
        raise ValueError(f"expression uses x{axis} but the problem dimension is {d}")


def depends_on_t(ast: Ast) -> bool:
    if isinstance(ast, Var):
        return ast.axis == 0
    if isinstance(ast, Num):
        return False
    if isinstance(ast, Neg):
        return depends_on_t(ast.arg)
    if isinstance(ast, Call):
        return depends_on_t(ast.arg)
    if isinstance(ast, Pow):
        return depends_on_t(ast.base)
    return depends_on_t(ast.left) or depends_on_t(ast.right)


def is_zero(ast: Ast) -> bool:
    return isinstance(ast, Num) and ast.value == 0.0


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def eval_many(ast: Ast, x: np.ndarray, t: float) -> np.ndarray:
    """Evaluate over an (N, d) array of points at a fixed time.

    Returns an (N,) array; raises EvalError on division by zero, sqrt of a
    negative number, or a non-finite result.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("points must be an (N, d) array")
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = _eval(ast, x, float(t))
    out = np.broadcast_to(out, (x.shape[0],)).astype(float, copy=False)
    if not np.all(np.isfinite(out)):
        raise EvalError("expression evaluated to a non-finite value")
    return out


def _finite(value):
    if not np.all(np.isfinite(value)):
        raise EvalError("non-finite intermediate value (overflow or domain error)")
    return value


def evaluate(ast: Ast, x, t: float) -> float:
    """Scalar evaluation at one point."""
    pt = np.asarray(x, dtype=float).reshape(1, -1)
    return float(eval_many(ast, pt, t)[0])


def _eval(ast: Ast, x: np.ndarray, t: float):
    if isinstance(ast, Num):
        return np.float64(ast.value)
    if isinstance(ast, Var):
        if ast.axis == 0:
            return np.float64(t)
        if ast.axis > x.shape[1]:
            raise EvalError(f"variable {ast.name} out of range for {x.shape[1]} dims")
        return x[:, ast.axis - 1]
    if isinstance(ast, Neg):
        return -_eval(ast.arg, x, t)
    if isinstance(ast, Call):
        arg = _eval(ast.arg, x, t)
        if ast.fn == "sin":
            return np.sin(arg)
        if ast.fn == "cos":
            return np.cos(arg)
        if ast.fn == "exp":
            return _finite(np.exp(arg))
        if ast.fn == "sqrt":
            if np.any(np.asarray(arg) < 0.0):
                raise EvalError("sqrt of a negative value")
            return np.sqrt(arg)
        raise EvalError(f"unknown function {ast.fn!r}")
    if isinstance(ast, Pow):
        base = _eval(ast.base, x, t)
        if ast.exponent < 0 and np.any(np.asarray(base) == 0.0):
            raise EvalError("zero raised to a negative power")
        return _finite(np.power(base, ast.exponent))
    if isinstance(ast, BinOp):
        left = _eval(ast.left, x, t)
        right = _eval(ast.right, x, t)
        if ast.op == "+":
            return _finite(left + right)
        if ast.op == "-":
            return _finite(left - right)
        if ast.op == "*":
            return _finite(left * right)
        if ast.op == "/":
            if np.any(np.asarray(right) == 0.0):
                raise EvalError("division by zero")
            return _finite(left / right)
    raise EvalError(f"cannot evaluate node {ast!r}")


# ---------------------------------------------------------------------------
# printing (round-trips through parse)
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def to_source(ast: Ast) -> str:
    return _print(ast)


def _prec(ast: Ast) -> int:
    if isinstance(ast, (Num, Var, Call)):
        return _PREC["atom"]
    if isinstance(ast, Pow):
        return _PREC["^"]
    if isinstance(ast, Neg):
        return _PREC["neg"]
    return _PREC[ast.op]


def _print(ast: Ast) -> str:
    if isinstance(ast, Num):
        if ast.value < 0.0:
            # negative literals only arise from constructed ASTs
            return f"({ast.value!r})"
        return repr(ast.value)
    if isinstance(ast, Var):
        return ast.name
    if isinstance(ast, Call):
        return f"{ast.fn}({_print(ast.arg)})"
    if isinstance(ast, Neg):
        inner = _print(ast.arg)
        if _prec(ast.arg) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(ast, Pow):
        base = _print(ast.base)
        if _prec(ast.base) < _PREC["atom"]:
            base = f"({base})"
        return f"{base}^{ast.exponent}"
    left = _print(ast.left)
    right = _print(ast.right)
    if _prec(ast.left) < _prec(ast):
        left = f"({left})"
    # binary operators parse left-associatively, so a right child of equal
    # precedence needs parentheses to survive a print/parse round trip
    if _prec(ast.right) <= _prec(ast):
        right = f"({right})"
    return f"{left} {ast.op} {right}"
