import json
from fractions import Fraction

import pytest

from models.pmdp import AffineExpr
from services import model_service
from services.model_service import (
    ModelSyntaxError,
    ModelValidationError,
    ParameterRangeError,
    UnknownStateError,
)


def model_text(transitions, parameters=None, states=None, initial=None, **extra):
    document = {
        'parameters': parameters if parameters is not None else [{'name': 'theta1', 'bounds': [0, 1]}],
        'states': states if states is not None else [{'name': 's0'}, {'name': 's1', 'labels': ['goal']}],
        'initial': initial if initial is not None else {'s0': '1'},
        'transitions': transitions
    }
    document.update(extra)
    return json.dumps(document, indent=2)


COIN = [
    {'from': 's0', 'action': 'a', 'to': 's1', 'prob': 'theta1'},
    {'from': 's0', 'action': 'a', 'to': 's0', 'prob': '1 - theta1'},
    {'from': 's1', 'action': 'a', 'to': 's1', 'prob': '1'}
]


class TestAffineExpressions:
    """Exact rational expressions and their evaluation"""

    def test_constant_plus_scaled_parameter(self):
        expr = model_service.parse_expression('0.25 + 0.5*theta1', {'theta1': 0})
        assert expr.constant == Fraction(1, 4)
        assert expr.terms == ((0, Fraction(1, 2)),)
        assert expr.evaluate((0.5,)) == pytest.approx(0.5)

    def test_fractions_stay_exact(self):
        expr = model_service.parse_expression('1 - 1/3*theta1 - 2/3*theta1', {'theta1': 0})
        assert expr == AffineExpr.of(1, [(0, -1)])
        assert expr.complement_param() == 0

    def test_literal_and_complement_detection(self):
        theta = AffineExpr.param(0)
        assert theta.literal_param() == 0
        assert (AffineExpr.const(1) - theta).complement_param() == 0
        assert AffineExpr.param(0, Fraction(1, 2)).literal_param() is None
        assert not AffineExpr.of(Fraction(3, 4), [(0, -1)]).is_elementary()

    def test_render_round_trips(self):
        names = ('theta1', 'theta2')
        expr = AffineExpr.of(Fraction(3, 4), [(0, -1), (1, Fraction(1, 2))])
        text = expr.render(names)
        assert text == '3/4 - theta1 + 1/2*theta2'
        assert model_service.parse_expression(text, {'theta1': 0, 'theta2': 1}) == expr

    def test_unknown_parameter_is_rejected(self):
        with pytest.raises(ModelValidationError, match='unknown parameter'):
            model_service.parse_expression('theta9', {'theta1': 0})

    def test_malformed_expression_is_a_syntax_error(self):
        with pytest.raises(ModelSyntaxError):
            model_service.parse_expression('theta1 * ', {'theta1': 0})

    def test_product_of_parameters_is_not_affine(self):
        with pytest.raises(ValueError):
            AffineExpr.param(0) * AffineExpr.param(1)


class TestParseModel:
    """Model file parsing and structural validation"""

    def test_fig4_structure(self, fig4):
        assert fig4.param_names == ('theta1', 'theta2')
        assert fig4.states == ('S0', 'S1', 'S2', 'S3', 'S4')
        assert fig4.enabled['S0'] == ('a', 'b', 'c', 'd')
        assert fig4.enabled['S1'] == ('a', 'b')
        assert fig4.label_map['S2'] == frozenset({'complete'})
        assert fig4.initial == (('S0', Fraction(1)),)

    def test_fig3_declares_its_prior(self, fig3):
        assert dict(fig3.prior) == {'theta1': (2.0, 4.0), 'theta2': (2.0, 4.0)}

    def test_print_then_parse_gives_the_same_model(self, fig4, fig2):
        for model in (fig4, fig2):
            assert model_service.parse_model(model_service.print_model(model)) == model

    def test_invalid_json_reports_the_line(self):
        with pytest.raises(ModelSyntaxError) as error:
            model_service.parse_model('{\n  "parameters": [,\n}')
        assert error.value.line == 2

    def test_expression_error_reports_the_line(self):
        transitions = [dict(COIN[0], prob='theta1 +'), COIN[1], COIN[2]]
        with pytest.raises(ModelSyntaxError) as error:
            model_service.parse_model(model_text(transitions))
        assert error.value.line is not None

    def test_unknown_state(self):
        transitions = COIN + [{'from': 's1', 'action': 'b', 'to': 's7', 'prob': '1'}]
        with pytest.raises(UnknownStateError, match='s7'):
            model_service.parse_model(model_text(transitions))

    def test_rows_must_sum_to_one(self):
        transitions = [COIN[0], dict(COIN[1], prob='1/2 - theta1'), COIN[2]]
        with pytest.raises(ModelValidationError, match='does not sum to 1'):
            model_service.parse_model(model_text(transitions))

    def test_coefficients_must_lie_in_unit_interval(self):
        transitions = [dict(COIN[0], prob='2*theta1'), dict(COIN[1], prob='1 - 2*theta1'), COIN[2]]
        with pytest.raises(ModelValidationError, match='coefficient'):
            model_service.parse_model(model_text(transitions))

    def test_every_state_needs_an_action(self):
        with pytest.raises(ModelValidationError, match='no enabled action'):
            model_service.parse_model(model_text(COIN[:2]))

    def test_schema_violations_are_reported(self):
        text = json.dumps({'parameters': [], 'states': [{'name': 's0'}], 'initial': {'s0': '1'}})
        with pytest.raises(ModelValidationError, match='schema'):
            model_service.parse_model(text)

    def test_initial_distribution_must_sum_to_one(self):
        with pytest.raises(ModelValidationError, match='initial'):
            model_service.parse_model(model_text(COIN, initial={'s0': '1/2'}))

    def test_duplicate_transition(self):
        with pytest.raises(ModelValidationError, match='duplicate'):
            model_service.parse_model(model_text(COIN + [COIN[2]]))

    def test_prior_for_unknown_parameter(self):
        with pytest.raises(ModelValidationError, match='prior'):
            model_service.parse_model(model_text(COIN, prior={'theta5': [1, 1]}))


class TestInstantiate:
    """Induced MDPs at parameter points"""

    def test_fig4_probabilities(self, fig4):
        mdp = model_service.instantiate(fig4, (0.5, 0.5))
        choice = mdp.choice(0, 'b')
        assert [mdp.states[t] for t in choice.targets] == ['S2', 'S0', 'S3']
        assert choice.probabilities == pytest.approx((0.5, 0.25, 0.25))

    def test_dict_points(self, fig4):
        mdp = model_service.instantiate(fig4, {'theta1': 0.5, 'theta2': 0.2})
        assert mdp.choice(1, 'a').probabilities == pytest.approx((0.1, 0.2, 0.7))

    def test_invalid_probability_is_rejected(self, fig4):
        with pytest.raises(ParameterRangeError, match='outside'):
            model_service.instantiate(fig4, (0.8, 0.5))

    def test_point_outside_bounds(self, fig4):
        with pytest.raises(ParameterRangeError):
            model_service.instantiate(fig4, (1.2, 0.5))

    def test_missing_coordinates(self, fig4):
        with pytest.raises(ParameterRangeError, match='missing'):
            model_service.point(fig4, {'theta1': 0.5})

    def test_enabled_actions_of_unknown_state(self, fig4):
        with pytest.raises(UnknownStateError):
            model_service.enabled_actions(fig4, 'S9')


class TestParameterSpace:
    """Validity constraints, interval classification and ties"""

    def test_valid_box_of_fig4(self, fig4):
        lower, upper = model_service.param_space(fig4).valid_box()
        assert lower == pytest.approx((0.0, 0.0))
        assert upper == pytest.approx((0.75, 0.9))

    def test_box_classification(self, fig4):
        space = model_service.param_space(fig4)
        assert space.classify_box((0.0, 0.0), (0.5, 0.5)) == 'valid'
        assert space.classify_box((0.8, 0.0), (1.0, 0.5)) == 'invalid'
        assert space.classify_box((0.5, 0.0), (1.0, 0.5)) == 'mixed'

    def test_fig3_validity_is_the_lower_triangle(self, fig3):
        space = model_service.param_space(fig3)
        assert space.is_valid((0.4, 0.6))
        assert not space.is_valid((0.6, 0.6))
        assert space.classify_box((0.5, 0.5), (1.0, 1.0)) == 'mixed'
        assert space.classify_box((0.6, 0.6), (1.0, 1.0)) == 'invalid'

    def test_tie_parameters(self, fig4):
        tied = model_service.tie_parameters(fig4, {'theta2': 'theta1'})
        assert tied.param_names == ('theta1',)
        assert dict(tied.rows[('S1', 'a')])['S1'] == AffineExpr.param(0)
        lower, upper = model_service.param_space(tied).valid_box()
        assert upper == pytest.approx((0.75,))

    def test_untie_point(self, fig4):
        ties = {'theta2': 'theta1'}
        assert model_service.untie_point(fig4, ties, {'theta1': 0.4}) == (0.4, 0.4)
        assert model_service.untie_point(fig4, ties, [0.3]) == (0.3, 0.3)

    def test_ties_must_name_known_parameters(self, fig4):
        with pytest.raises(ModelValidationError):
            model_service.tie_parameters(fig4, {'theta2': 'theta7'})
        with pytest.raises(ModelValidationError):
            model_service.tie_parameters(fig4, {'theta1': 'theta1'})
