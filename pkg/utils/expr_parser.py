"""
Affine probability expression parser

Grammar (UTF-8 text, one expression per transition):
    expr := term (('+' | '-') term)*
    term := rational | rational '*' param | param
    rational := integer | decimal | integer '/' integer

Built with PLY (Python Lex-Yacc). Rationals are kept exact as Fractions.
"""
from fractions import Fraction

import ply.lex as lex
import ply.yacc as yacc


class ExpressionSyntaxError(Exception):
    """Raised for malformed expressions; carries the 1-based column"""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


tokens = (
    'NUMBER',
    'NAME',
    'PLUS',
    'MINUS',
    'TIMES',
    'DIVIDE',
)

t_PLUS = r'\+'
t_MINUS = r'-'
t_TIMES = r'\*'
t_DIVIDE = r'/'
t_ignore = ' \t'


def t_NUMBER(t):
    r'\d+(\.\d+)?'
    t.value = Fraction(t.value)
    return t


def t_NAME(t):
    r'[A-Za-z_][A-Za-z0-9_]*'
    return t


def t_error(t):
    raise ExpressionSyntaxError(
        f"illegal character '{t.value[0]}'", column=t.lexpos + 1
    )


def p_expr_term(p):
    """expr : term"""
    p[0] = [p[1]]


def p_expr_plus(p):
    """expr : expr PLUS term"""
    p[0] = p[1] + [p[3]]


def p_expr_minus(p):
    """expr : expr MINUS term"""
    coefficient, name = p[3]
    p[0] = p[1] + [(-coefficient, name)]


def p_term_rational(p):
    """term : rational"""
    p[0] = (p[1], None)


def p_term_scaled(p):
    """term : rational TIMES NAME"""
    p[0] = (p[1], p[3])


def p_term_param(p):
    """term : NAME"""
    p[0] = (Fraction(1), p[1])


def p_rational_number(p):
    """rational : NUMBER"""
    p[0] = p[1]


def p_rational_fraction(p):
    """rational : NUMBER DIVIDE NUMBER"""
    if p[3] == 0:
        raise ExpressionSyntaxError('division by zero', column=p.lexpos(3) + 1)
    p[0] = p[1] / p[3]


def p_error(p):
    if p is None:
        raise ExpressionSyntaxError('unexpected end of expression')
    raise ExpressionSyntaxError(
        f"unexpected token '{p.value}'", column=p.lexpos + 1
    )


lexer = lex.lex()
parser = yacc.yacc(debug=False, write_tables=False, errorlog=yacc.NullLogger())


def parse_terms(text):
    """
    Parse an affine expression into a list of (coefficient, name) terms

    Args:
        text (str): expression such as '1 - theta1 - 1/4'

    Returns:
        list: (Fraction, str or None) pairs; None marks a constant term

    Raises:
        ExpressionSyntaxError: if the text does not match the grammar
    """
    if not text or not text.strip():
        raise ExpressionSyntaxError('empty expression', column=1)
    return parser.parse(text, lexer=lexer.clone())
