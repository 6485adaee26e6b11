"""Static audit of the event data path: walk the AST of every function in
runtime.DATA_PATH_FUNCTIONS and report any multiplicative arithmetic
(operators or numpy calls). Shared by the runtime unit tests and the
acceptance suite."""

import ast
import inspect

from counternet import runtime

FORBIDDEN_OPS = (ast.Mult, ast.Div, ast.FloorDiv, ast.Mod, ast.MatMult, ast.Pow)
FORBIDDEN_CALLS = {
    "multiply", "matmul", "dot", "vdot", "inner", "outer", "tensordot",
    "einsum", "prod", "power", "square", "divide", "true_divide",
    "floor_divide", "mod", "remainder", "divmod", "pow",
}


def _locate(tree, dotted):
    node = None
    body = tree.body
    for part in dotted.split("."):
        node = next(n for n in body
                    if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef,
                                      ast.ClassDef)) and n.name == part)
        body = getattr(node, "body", [])
    if not isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
        raise LookupError(f"{dotted} is not a function in runtime.py")
    return node


def multiplicative_arithmetic(names=runtime.DATA_PATH_FUNCTIONS):
    """Return (name, line, offence) triples; empty means the audit passed."""
    tree = ast.parse(inspect.getsource(runtime))
    found = []
    for name in names:
        for node in ast.walk(_locate(tree, name)):
            if isinstance(node, (ast.BinOp, ast.AugAssign)) and \
                    isinstance(node.op, FORBIDDEN_OPS):
                found.append((name, node.lineno, type(node.op).__name__))
            elif isinstance(node, ast.Call):
                f = node.func
                called = f.attr if isinstance(f, ast.Attribute) else getattr(f, "id", "")
                if called in FORBIDDEN_CALLS:
                    found.append((name, node.lineno, f"call:{called}"))
    return found
