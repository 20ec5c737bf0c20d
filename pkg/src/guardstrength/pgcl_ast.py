"""Single import point for program syntax, evaluation and the surface grammar."""

from .parser import (  # noqa: F401
    parse_arith,
    parse_expectation,
    parse_guard,
    parse_program,
    pretty_print,
    print_arith,
    print_expectation,
    print_guard,
)
from .syntax import (  # noqa: F401
    DIVERGE,
    FALSE,
    SKIP,
    TRUE,
    And,
    ArithExpr,
    Assign,
    BinOp,
    BoolConst,
    Cmp,
    DiscreteDist,
    Guard,
    If,
    Implication,
    Not,
    Num,
    Or,
    ProbChoice,
    Program,
    RandomAssign,
    Seq,
    Skip,
    State,
    UniformChoice,
    UniformDist,
    UnOp,
    Var,
    While,
    eval_arith,
    eval_guard,
    grid,
    guard_implies,
    is_discrete,
    is_loop_free,
    split_loop,
)
