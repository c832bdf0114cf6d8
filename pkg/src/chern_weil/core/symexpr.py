"""
Scalar symbolic expressions.

Expressions are sympy trees. Opaque user functions (``A(t)``, ``f(x, y)``)
are sympy Function classes generated per (name, derivative orders), so
differentiation of ``A(t)`` yields ``A'(t)`` instead of an unevaluated
Derivative.
"""
import cmath
import logging
import math
import random
import re
import threading
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import sympy as sp
from sympy.printing.latex import LatexPrinter
from sympy.printing.precedence import PRECEDENCE
from sympy.printing.str import StrPrinter

from chern_weil.core.basic_models import EqualityVerdict
from chern_weil.core.config import config
from chern_weil.core.errors import EvaluationError, ExpressionSyntaxError, SymbolicError

logger = logging.getLogger(__name__)

Expr = sp.Expr
ExprLike = Union[sp.Expr, str, int, Fraction]

KNOWN_FUNCTIONS: Dict[str, Any] = {
    "sin": sp.sin, "cos": sp.cos, "tan": sp.tan,
    "sinh": sp.sinh, "cosh": sp.cosh, "tanh": sp.tanh,
    "exp": sp.exp, "log": sp.log, "sqrt": sp.sqrt,
}
RESERVED = {"pi": sp.pi, "I": sp.I}

_registry_lock = threading.Lock()
_declared: Dict[str, int] = {}


# ---------------------------------------------------------------------------
# Opaque functions
# ---------------------------------------------------------------------------

def _python_name(name: str, orders: Tuple[int, ...]) -> str:
    base = re.sub(r"[^A-Za-z0-9_]", "_", name)
    if any(orders):
        return f"{base}_d{'_'.join(str(o) for o in orders)}"
    return base


def display_name(name: str, orders: Tuple[int, ...]) -> str:
    if not any(orders):
        return name
    if len(orders) == 1:
        return name + "'" * orders[0]
    return f"{name}'{'_'.join(str(o) for o in orders)}"


@lru_cache(maxsize=None)
def _kernel(name: str, orders: Tuple[int, ...]) -> type:
    def fdiff(self, argindex=1):
        bumped = list(orders)
        bumped[argindex - 1] += 1
        return _kernel(name, tuple(bumped))(*self.args)

    return type(_python_name(name, orders), (sp.Function,), {
        "nargs": len(orders),
        "fdiff": fdiff,
        "user_name": name,
        "orders": orders,
        "is_user_kernel": True,
        "__module__": __name__,
    })


def is_user_function(node: Any) -> bool:
    return isinstance(node, sp.Function) and getattr(node.func, "is_user_kernel", False)


@dataclass(frozen=True)
class UserFunction:
    """An opaque smooth function known only by name and arity."""
    name: str
    arity: int

    def __call__(self, *args: ExprLike) -> sp.Expr:
        return self.derivative(*([0] * self.arity))(*[as_expr(a) for a in args])

    def derivative(self, *orders: int) -> type:
        if len(orders) != self.arity:
            raise SymbolicError(f"{self.name} takes {self.arity} derivative orders")
        return _kernel(self.name, tuple(int(o) for o in orders))


def declare_function(name: str, arity: int) -> UserFunction:
    if name in KNOWN_FUNCTIONS or name in RESERVED:
        raise SymbolicError(f"'{name}' is a reserved name")
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
        raise SymbolicError(f"Invalid function name '{name}'")
    with _registry_lock:
        known = _declared.get(name)
        if known is not None and known != arity:
            raise SymbolicError(f"Function '{name}' was declared with arity {known}, not {arity}")
        _declared[name] = arity
    return UserFunction(name, arity)


def _split_function_identifier(ident: str) -> Tuple[str, Optional[Tuple[int, ...]]]:
    """'A' -> ('A', None); "A''" -> ('A', (2,)); "f'1_0" -> ('f', (1, 0))."""
    if "'" not in ident:
        return ident, None
    base, suffix = ident.split("'", 1)
    suffix = "'" + suffix
    if set(suffix) == {"'"}:
        return base, (len(suffix),)
    match = re.fullmatch(r"'(\d+(?:_\d+)*)", suffix)
    if not match:
        raise SymbolicError(f"Malformed derivative marker in '{ident}'")
    return base, tuple(int(p) for p in match.group(1).split("_"))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

@dataclass
class _Token:
    kind: str  # 'num', 'ident', 'op', 'end'
    value: str
    pos: int


_TOKEN_RE = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_']*)|([-+*/^(),−]))")

# (binding power, associativity)
_BINARY = {"+": (10, "left"), "-": (10, "left"), "*": (20, "left"), "/": (20, "left"), "^": (40, "right")}
_UNARY_POWER = 30


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        match = _TOKEN_RE.match(text, pos)
        if not match:
            raise ExpressionSyntaxError(f"Unexpected character '{text[pos]}'", _byte_offset(text, pos), text)
        start = match.start(match.lastindex)
        if match.group(1):
            tokens.append(_Token("num", match.group(1), start))
        elif match.group(2):
            tokens.append(_Token("ident", match.group(2), start))
        else:
            op = "-" if match.group(3) == "−" else match.group(3)
            tokens.append(_Token("op", op, start))
        pos = match.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.index = 0

    def fail(self, message: str, token: _Token):
        raise ExpressionSyntaxError(message, _byte_offset(self.text, token.pos), self.text)

    def peek(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, value: str) -> _Token:
        token = self.advance()
        if token.kind != "op" or token.value != value:
            self.fail(f"Expected '{value}'", token)
        return token

    def parse(self) -> sp.Expr:
        if self.peek().kind == "end":
            self.fail("Empty expression", self.peek())
        result = self.expression(0)
        if self.peek().kind != "end":
            self.fail(f"Unexpected '{self.peek().value}'", self.peek())
        return result

    def expression(self, min_power: int) -> sp.Expr:
        lhs = self.prefix()
        while True:
            token = self.peek()
            if token.kind != "op" or token.value not in _BINARY:
                return lhs
            power, assoc = _BINARY[token.value]
            if power < min_power:
                return lhs
            self.advance()
            rhs = self.expression(power + 1 if assoc == "left" else power)
            lhs = self.combine(token, lhs, rhs)

    def combine(self, token: _Token, lhs: sp.Expr, rhs: sp.Expr) -> sp.Expr:
        op = token.value
        if op == "+":
            return lhs + rhs
        if op == "-":
            return lhs - rhs
        if op == "*":
            return lhs * rhs
        if op == "/":
            if rhs == 0:
                self.fail("Division by zero", token)
            return lhs / rhs
        if not rhs.is_Rational:
            self.fail("Exponent must be an integer or rational constant", token)
        if lhs == 0 and rhs.is_negative:
            self.fail("Division by zero", token)
        return lhs ** rhs

    def prefix(self) -> sp.Expr:
        token = self.advance()
        if token.kind == "op" and token.value in ("-", "+"):
            operand = self.expression(_UNARY_POWER)
            return -operand if token.value == "-" else operand
        if token.kind == "op" and token.value == "(":
            inner = self.expression(0)
            self.expect(")")
            return inner
        if token.kind == "num":
            return sp.Integer(int(token.value))
        if token.kind == "ident":
            if self.peek().kind == "op" and self.peek().value == "(":
                return self.call(token)
            if token.value in RESERVED:
                return RESERVED[token.value]
            if token.value in KNOWN_FUNCTIONS:
                self.fail(f"Function '{token.value}' needs an argument", token)
            return sp.Symbol(token.value)
        if token.kind == "end":
            self.fail("Unexpected end of expression", token)
        self.fail(f"Unexpected '{token.value}'", token)

    def call(self, name_token: _Token) -> sp.Expr:
        self.expect("(")
        args = [self.expression(0)]
        while self.peek().kind == "op" and self.peek().value == ",":
            self.advance()
            args.append(self.expression(0))
        self.expect(")")

        ident = name_token.value
        if ident in KNOWN_FUNCTIONS:
            if len(args) != 1:
                self.fail(f"'{ident}' takes exactly one argument", name_token)
            return KNOWN_FUNCTIONS[ident](args[0])
        if ident in RESERVED:
            self.fail(f"'{ident}' is not a function", name_token)
        try:
            base, orders = _split_function_identifier(ident)
            if orders is None:
                orders = (0,) * len(args)
            if len(orders) != len(args):
                self.fail(f"Derivative marker of '{ident}' does not match {len(args)} arguments", name_token)
            declare_function(base, len(args))
        except SymbolicError as e:
            self.fail(str(e), name_token)
        return _kernel(base, orders)(*args)


def parse(text: str) -> sp.Expr:
    return _Parser(text).parse()


def as_expr(value: ExprLike) -> sp.Expr:
    if isinstance(value, sp.Basic):
        return value
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, Fraction):
        return sp.Rational(value.numerator, value.denominator)
    if isinstance(value, bool):
        raise SymbolicError("Booleans are not expressions")
    if isinstance(value, int):
        return sp.Integer(value)
    return sp.sympify(value, strict=True)


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

class _TextPrinter(StrPrinter):
    """Prints back into the parser's grammar."""

    def _print_Pow(self, expr, rational=False):
        base, exp = expr.as_base_exp()
        if exp == sp.S.Half:
            return f"sqrt({self._print(base)})"
        if exp.is_negative:
            inverted = base if exp == -1 else sp.Pow(base, -exp, evaluate=False)
            return f"1/{self.parenthesize(inverted, PRECEDENCE['Mul'], strict=False)}"
        base_text = self.parenthesize(base, PRECEDENCE["Pow"], strict=False)
        if exp.is_Integer:
            return f"{base_text}^{exp}"
        return f"{base_text}^({self._print(exp)})"

    def _print_Exp1(self, expr):
        return "exp(1)"

    def _print_Function(self, expr):
        if is_user_function(expr):
            name = display_name(expr.func.user_name, expr.func.orders)
            return f"{name}({', '.join(self._print(a) for a in expr.args)})"
        return super()._print_Function(expr)

    def _print_Float(self, expr):
        raise SymbolicError("Floating-point constants cannot be printed exactly")


class _TexPrinter(LatexPrinter):

    def _print_Function(self, expr, exp=None):
        if not is_user_function(expr):
            return super()._print_Function(expr, exp)
        name = expr.func.user_name
        orders = expr.func.orders
        args = expr.args
        total = sum(orders)
        if total == 0:
            body = f"{name}{{\\left({', '.join(self._print(a) for a in args)} \\right)}}"
        elif all(a.is_Symbol for a in args):
            top = "\\partial" if total == 1 else f"\\partial^{{{total}}}"
            bottom = " ".join(
                f"\\partial {self._print(a)}" + ("" if o == 1 else f"^{{{o}}}")
                for a, o in zip(args, orders) if o
            )
            body = f"\\frac{{{top} {name}}}{{{bottom}}}"
        else:
            label = str(total) if len(orders) == 1 else ",".join(str(o) for o in orders)
            body = f"{name}^{{({label})}}{{\\left({', '.join(self._print(a) for a in args)} \\right)}}"
        if exp is not None:
            return f"\\left({body}\\right)^{{{exp}}}"
        return body


def to_text(e: ExprLike) -> str:
    return _TextPrinter().doprint(as_expr(e))


def to_latex(e: ExprLike) -> str:
    return _TexPrinter().doprint(as_expr(e))


# ---------------------------------------------------------------------------
# Canonical form
# ---------------------------------------------------------------------------

_UNIT = sp.Dummy("i_unit")
_NON_FINITE = (sp.zoo, sp.nan, sp.oo, -sp.oo)


def _check_finite(expr: sp.Expr):
    if any(expr.has(bad) for bad in _NON_FINITE):
        raise SymbolicError(f"Expression is not finite: {expr}")


def _rewrite_trig(expr: sp.Expr) -> sp.Expr:
    def even_power_of(node, func):
        return node.is_Pow and isinstance(node.base, func) and node.exp.is_Integer \
            and node.exp >= 2 and node.exp % 2 == 0

    expr = expr.replace(lambda n: even_power_of(n, sp.sin),
                        lambda n: (1 - sp.cos(n.base.args[0]) ** 2) ** (n.exp // 2))
    expr = expr.replace(lambda n: even_power_of(n, sp.cosh),
                        lambda n: (1 + sp.sinh(n.base.args[0]) ** 2) ** (n.exp // 2))
    return expr


def _reduce_unit(poly_expr: sp.Expr) -> sp.Expr:
    poly_expr = sp.expand(poly_expr)
    if not poly_expr.has(_UNIT):
        return poly_expr
    result = sp.Integer(0)
    for (k,), coeff in sp.Poly(poly_expr, _UNIT).terms():
        sign = -1 if (k // 2) % 2 else 1
        result += sign * coeff * (_UNIT if k % 2 else 1)
    return sp.expand(result)


class _Atomizer:
    """Replaces everything that is not a rational operation by a placeholder symbol."""

    def __init__(self, trig: bool):
        self.trig = trig
        self.atoms: Dict[sp.Expr, sp.Symbol] = {}

    def atom(self, kernel: sp.Expr) -> sp.Symbol:
        if kernel not in self.atoms:
            self.atoms[kernel] = sp.Dummy(f"atom{len(self.atoms)}")
        return self.atoms[kernel]

    def visit(self, node: sp.Expr) -> sp.Expr:
        if node is sp.I:
            return _UNIT
        if node.is_Symbol or node.is_Rational or node.is_Float:
            return node
        if node.is_Add or node.is_Mul:
            return node.func(*[self.visit(a) for a in node.args])
        if node.is_Pow:
            base, exp = node.args
            if exp.is_Integer:
                return self.visit(base) ** exp
            inner = canonicalize(base, trig=self.trig)
            if exp.is_Rational and exp.is_negative:
                kernel = sp.Pow(inner, -exp)
                return 1 / self._atom_or_visit(kernel, node)
            return self._atom_or_visit(sp.Pow(inner, exp), node)
        if not node.args:
            return self.atom(node)
        kernel = node.func(*[canonicalize(a, trig=self.trig) for a in node.args])
        return self._atom_or_visit(kernel, node)

    def _atom_or_visit(self, kernel: sp.Expr, original: sp.Expr) -> sp.Expr:
        # Rebuilding with canonical arguments may evaluate (sin(0) -> 0)
        if kernel.func != original.func:
            return self.visit(kernel)
        return self.atom(kernel)


def canonicalize(e: ExprLike, trig: Optional[bool] = None) -> sp.Expr:
    """
    Brings an expression to a canonical rational form over its transcendental
    kernels: one reduced fraction, i^2 replaced by -1 and no i left in the
    denominator. Two expressions with the same rational structure produce
    structurally equal results.
    """
    expr = as_expr(e)
    _check_finite(expr)
    if trig is None:
        trig = config.TRIG_REWRITE
    if trig:
        expr = _rewrite_trig(expr)

    atomizer = _Atomizer(trig)
    flat = atomizer.visit(expr)

    num, den = sp.fraction(sp.cancel(sp.together(flat)))
    num, den = _reduce_unit(num), _reduce_unit(den)
    if den.has(_UNIT):
        conjugate = den.xreplace({_UNIT: -_UNIT})
        num, den = _reduce_unit(num * conjugate), _reduce_unit(den * conjugate)
    if den == 0:
        raise SymbolicError(f"Division by zero in {expr}")

    num, den = sp.fraction(sp.cancel(num / den))
    num = _reduce_unit(num)
    back = {symbol: kernel for kernel, symbol in atomizer.atoms.items()}
    back[_UNIT] = sp.I
    result = (num / den).xreplace(back)
    _check_finite(result)
    return result


def is_zero(e: ExprLike) -> bool:
    return canonicalize(e) == 0


def canonical_equal(a: ExprLike, b: ExprLike) -> bool:
    return is_zero(as_expr(a) - as_expr(b))


def differentiate(e: ExprLike, var: Union[str, sp.Symbol]) -> sp.Expr:
    symbol = sp.Symbol(var) if isinstance(var, str) else var
    return canonicalize(sp.diff(as_expr(e), symbol))


def variables(e: ExprLike) -> List[sp.Symbol]:
    return sorted(as_expr(e).free_symbols, key=str)


def free_variables(e: ExprLike) -> List[str]:
    return [s.name for s in variables(e)]


def substitute(e: ExprLike, mapping: Mapping[Union[str, sp.Symbol], ExprLike]) -> sp.Expr:
    """Simultaneous substitution of variables, followed by canonicalization."""
    replacements = {
        (sp.Symbol(k) if isinstance(k, str) else k): as_expr(v) for k, v in mapping.items()
    }
    return canonicalize(as_expr(e).xreplace(replacements))


# ---------------------------------------------------------------------------
# Numeric evaluation
# ---------------------------------------------------------------------------

def _guard_tan(z: complex) -> complex:
    if abs(cmath.cos(z)) < config.POLE_EPSILON:
        raise EvaluationError(f"Pole of tan at {z}")
    return cmath.tan(z)


def _guard_tanh(z: complex) -> complex:
    if abs(cmath.cosh(z)) < config.POLE_EPSILON:
        raise EvaluationError(f"Pole of tanh at {z}")
    return cmath.tanh(z)


def _guard_log(z: complex) -> complex:
    if abs(z) < config.POLE_EPSILON:
        raise EvaluationError("Logarithm of zero")
    return cmath.log(z)


_NUMERIC_FUNCTIONS: Dict[str, Callable[[complex], complex]] = {
    "sin": cmath.sin, "cos": cmath.cos, "tan": _guard_tan,
    "sinh": cmath.sinh, "cosh": cmath.cosh, "tanh": _guard_tanh,
    "exp": cmath.exp, "log": _guard_log, "sqrt": cmath.sqrt,
}


def _impl_key(node: sp.Expr) -> Tuple[str, ...]:
    name, orders = node.func.user_name, node.func.orders
    return display_name(name, orders), _python_name(name, orders)


class _Evaluator:
    def __init__(self, env: Dict[str, complex], fn_impls: Mapping[str, Callable]):
        self.env = env
        self.fn_impls = fn_impls

    def visit(self, node: sp.Expr) -> complex:
        if node is sp.I:
            return 1j
        if node is sp.pi:
            return complex(math.pi)
        if node is sp.E:
            return complex(math.e)
        if node.is_Number:
            return complex(node)
        if node.is_Symbol:
            if node.name not in self.env:
                raise EvaluationError(f"Unbound variable '{node.name}'")
            return self.env[node.name]
        if node.is_Add:
            return sum((self.visit(a) for a in node.args), 0j)
        if node.is_Mul:
            value = 1 + 0j
            for a in node.args:
                value *= self.visit(a)
            return value
        if node.is_Pow:
            return self.power(node)
        if is_user_function(node):
            args = [self.visit(a) for a in node.args]
            for key in _impl_key(node):
                if key in self.fn_impls:
                    return complex(self.fn_impls[key](*args))
            raise EvaluationError(f"No implementation for function '{_impl_key(node)[0]}'")
        name = getattr(node.func, "__name__", "")
        if name in _NUMERIC_FUNCTIONS:
            return _NUMERIC_FUNCTIONS[name](self.visit(node.args[0]))
        raise EvaluationError(f"Cannot evaluate {node}")

    def power(self, node: sp.Expr) -> complex:
        base = self.visit(node.base)
        exp = node.exp
        if exp.is_Integer:
            n = int(exp)
            if n < 0 and abs(base) < config.POLE_EPSILON:
                raise EvaluationError(f"Pole at {node}")
            return base ** n
        e = self.visit(exp)
        if abs(base) < config.POLE_EPSILON:
            if e.real < 0:
                raise EvaluationError(f"Pole at {node}")
            return 0j
        return base ** e


def eval_numeric(e: ExprLike, bindings: Mapping[Any, Any],
                 fn_impls: Optional[Mapping[str, Callable]] = None) -> complex:
    env = {str(k): complex(v) for k, v in bindings.items()}
    try:
        return _Evaluator(env, fn_impls or {}).visit(as_expr(e))
    except (ZeroDivisionError, OverflowError, ValueError) as exc:
        if isinstance(exc, EvaluationError):
            raise
        raise EvaluationError(f"Numeric failure: {exc}") from exc


def compile_numeric(e: ExprLike, args: Sequence[sp.Symbol],
                    fn_impls: Optional[Mapping[str, Callable]] = None) -> Callable:
    """Vectorized numpy callable for quadrature."""
    expr = as_expr(e)
    impls = {}
    for node in expr.atoms(sp.Function):
        if not is_user_function(node):
            continue
        display, python = _impl_key(node)
        impl = (fn_impls or {}).get(display) or (fn_impls or {}).get(python)
        if impl is None:
            raise EvaluationError(f"No implementation for function '{display}'")
        impls[python] = impl
    return sp.lambdify(list(args), expr, modules=[impls, "numpy"])


# ---------------------------------------------------------------------------
# Probabilistic equality
# ---------------------------------------------------------------------------

def _random_models(exprs: Sequence[sp.Expr], fn_impls: Mapping[str, Callable],
                   rng: random.Random) -> List[sp.Expr]:
    """
    Substitutes smooth random stand-ins for opaque functions lacking
    implementations; one stand-in per function name across all `exprs`.
    """
    models: Dict[str, Tuple[sp.Expr, Tuple[sp.Symbol, ...]]] = {}

    def model_for(name: str, arity: int):
        if name not in models:
            params = tuple(sp.Dummy(f"t{j}") for j in range(arity))
            body = sp.Float(rng.uniform(0.5, 1.5))
            for t in params:
                body += sp.Float(rng.uniform(0.5, 1.5)) * sp.sin(sp.Float(rng.uniform(0.5, 1.5)) * t
                                                                  + sp.Float(rng.uniform(0, 3)))
            if arity > 1:
                body += sp.Float(rng.uniform(0.1, 0.5)) * sp.cos(sum(params))
            models[name] = (body, params)
        return models[name]

    def replace(node):
        display, python = _impl_key(node)
        if display in fn_impls or python in fn_impls:
            return node
        body, params = model_for(node.func.user_name, len(node.args))
        derived = body
        for t, order in zip(params, node.func.orders):
            if order:
                derived = sp.diff(derived, t, order)
        return derived.xreplace(dict(zip(params, node.args)))

    return [e.replace(is_user_function, replace) for e in exprs]


def equal_sym(a: ExprLike, b: ExprLike, trials: Optional[int] = None, tol: Optional[float] = None,
              rng: Optional[random.Random] = None,
              fn_impls: Optional[Mapping[str, Callable]] = None) -> EqualityVerdict:
    """
    Exact canonical comparison first; otherwise compares numeric values on
    random sample points away from poles.
    """
    expr_a, expr_b = as_expr(a), as_expr(b)
    try:
        if is_zero(expr_a - expr_b):
            return EqualityVerdict(True, exact=True)
    except SymbolicError as e:
        logger.debug(f"Canonical comparison failed, sampling instead: {e}")

    trials = config.EQUAL_SYM_TRIALS if trials is None else trials
    tol = config.EQUAL_SYM_TOL if tol is None else tol
    rng = rng or random.Random(0)
    impls = dict(fn_impls or {})

    sample_a, sample_b = _random_models([expr_a, expr_b], impls, rng)
    denominator = sp.fraction(sp.together(sample_a - sample_b))[1]
    names = sorted({s.name for s in (sample_a - sample_b).free_symbols | expr_a.free_symbols | expr_b.free_symbols})

    done = 0
    attempts = 0
    while done < trials:
        attempts += 1
        if attempts > config.MAX_SAMPLE_ATTEMPTS:
            logger.warning("No usable sample points found, equality undecided")
            return EqualityVerdict(False, trials=done)
        point = {n: rng.uniform(config.SAMPLE_LOW, config.SAMPLE_HIGH) for n in names}
        try:
            if abs(eval_numeric(denominator, point, impls)) < config.DENOMINATOR_REJECT:
                continue
            va = eval_numeric(sample_a, point, impls)
            vb = eval_numeric(sample_b, point, impls)
        except EvaluationError:
            continue
        if abs(va - vb) > tol * max(1.0, abs(va), abs(vb)):
            return EqualityVerdict(False, witness={k: complex(v) for k, v in point.items()}, trials=done + 1)
        done += 1
    return EqualityVerdict(True, exact=False, trials=done)
