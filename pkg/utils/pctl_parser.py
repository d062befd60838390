"""
PCTL property parser using PLY (Python Lex-Yacc)

Grammar:
    prop := P op num [ sf U sf ] | P op num [ X sf ]
    sf   := true | "label" | ! sf | sf & sf | ( sf ) | prop
    op   := < | <= | >= | >

Nested probabilistic operators are accepted by the grammar so that they can
be rejected with a dedicated error by the caller.
"""
import ply.lex as lex
import ply.yacc as yacc

from models.pctl import (
    And,
    Atom,
    Comparison,
    Next,
    Not,
    ProbabilisticFormula,
    TrueFormula,
    Until,
)


class PropertySyntaxError(Exception):
    """Raised for malformed property text; carries the 1-based column"""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


RESERVED = {
    'P': 'PROB',
    'U': 'UNTIL',
    'X': 'NEXT',
    'true': 'TRUE',
}

tokens = (
    'PROB',
    'UNTIL',
    'NEXT',
    'TRUE',
    'COMPARE',
    'NUMBER',
    'LABEL',
    'AND',
    'NOT',
    'LPAREN',
    'RPAREN',
    'LBRACKET',
    'RBRACKET',
)

t_AND = r'\&'
t_NOT = r'\!'
t_LPAREN = r'\('
t_RPAREN = r'\)'
t_LBRACKET = r'\['
t_RBRACKET = r'\]'
t_ignore = ' \t\r\n'


def t_COMPARE(t):
    r'<=|>=|<|>'
    t.value = Comparison(t.value)
    return t


def t_NUMBER(t):
    r'\d+(\.\d*)?([eE][-+]?\d+)?|\.\d+'
    t.value = float(t.value)
    return t


def t_LABEL(t):
    r'"[^"]*"'
    t.value = t.value[1:-1]
    return t


def t_KEYWORD(t):
    r'[A-Za-z_][A-Za-z0-9_]*'
    if t.value not in RESERVED:
        raise PropertySyntaxError(
            f"unknown keyword '{t.value}' (labels must be quoted)",
            column=t.lexpos + 1,
        )
    t.type = RESERVED[t.value]
    return t


def t_error(t):
    raise PropertySyntaxError(
        f"illegal character '{t.value[0]}'", column=t.lexpos + 1
    )


precedence = (
    ('left', 'UNTIL'),
    ('left', 'AND'),
    ('right', 'NOT'),
)


def p_property(p):
    """prop : PROB COMPARE NUMBER LBRACKET path RBRACKET"""
    if not 0.0 <= p[3] <= 1.0:
        raise PropertySyntaxError(
            f'threshold {p[3]} outside [0, 1]', column=p.lexpos(3) + 1
        )
    p[0] = ProbabilisticFormula(p[2], p[3], p[5])


def p_path_until(p):
    """path : state UNTIL state"""
    p[0] = Until(p[1], p[3])


def p_path_next(p):
    """path : NEXT state"""
    p[0] = Next(p[2])


def p_state_true(p):
    """state : TRUE"""
    p[0] = TrueFormula()


def p_state_label(p):
    """state : LABEL"""
    p[0] = Atom(p[1])


def p_state_not(p):
    """state : NOT state"""
    p[0] = Not(p[2])


def p_state_and(p):
    """state : state AND state"""
    p[0] = And(p[1], p[3])


def p_state_paren(p):
    """state : LPAREN state RPAREN"""
    p[0] = p[2]


def p_state_prop(p):
    """state : prop"""
    p[0] = p[1]


def p_error(p):
    if p is None:
        raise PropertySyntaxError('unexpected end of property')
    raise PropertySyntaxError(f"unexpected token '{p.value}'", column=p.lexpos + 1)


lexer = lex.lex()
parser = yacc.yacc(debug=False, write_tables=False, errorlog=yacc.NullLogger())


def parse(text):
    """Parse property text into an AST (no fragment checks)"""
    if not text or not text.strip():
        raise PropertySyntaxError('empty property', column=1)
    return parser.parse(text, lexer=lexer.clone())
