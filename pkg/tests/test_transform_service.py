import json

import pytest

from config.settings import AUX_ACTION, AUX_LABEL
from models.pmdp import AffineExpr
from services import model_service, pctl_service, transform_service
from services.transform_service import TransformError, switch_name


def valid_points(model, count, rng):
    """Uniform points of the declared box that yield valid probabilities"""
    space = model_service.param_space(model)
    points = []
    while len(points) < count:
        theta = tuple(rng.uniform(space.lower, space.upper))
        if space.is_valid(theta):
            points.append(theta)
    return points


class TestExpansionShape:
    """Fresh states, tied rows and lineage of the expansions"""

    def test_split_states_of_scaled_rows(self, fig_split):
        expanded = transform_service.expand(fig_split)
        switch = switch_name('s0', 'alpha1', 's3', 0)
        assert set(expanded.fresh_states) == {switch, switch_name('s0', 'alpha2', 's1', 0)}
        assert expanded.edge_expr[('s0', 'alpha1', switch)] == AffineExpr.const(0.5)
        assert expanded.edge_expr[(switch, AUX_ACTION, 's3')] == AffineExpr.param(0)
        assert expanded.edge_expr[('s0', 'alpha1', 's1')] == AffineExpr.const(0.5)
        assert expanded.lineage[('s0', 'alpha1', 's1')] == (
            (('s0', 'alpha1', 's1'),),
            (('s0', 'alpha1', switch), (switch, AUX_ACTION, 's1'))
        )
        assert transform_service.is_normal_form(expanded)
        assert expanded.tied_rows == ()

    def test_fresh_states_carry_the_helper_label(self, fig_split):
        expanded = transform_service.expand(fig_split)
        labels = expanded.model.label_map
        assert all(labels[s] == frozenset({AUX_LABEL}) for s in expanded.fresh_states)

    def test_split_transitions_gives_single_term_edges(self, fig2):
        split = transform_service.split_transitions(fig2)
        for t in split.transitions:
            if t.probability.constant >= 0 and all(k > 0 for _, k in t.probability.terms):
                assert len(t.probability.terms) + (t.probability.constant != 0) <= 1

    def test_fig2_routes_through_pass_through_and_switch_states(self, fig2):
        expanded = transform_service.expand(fig2)
        assert len(expanded.fresh_states) == 8
        routes = expanded.lineage[('s0', 'alpha2', 's1')]
        assert len(routes) == 2
        assert all(len(route) == 3 for route in routes)
        assert transform_service.is_normal_form(expanded)

    def test_fig3_sum_row_is_tied(self, fig3):
        expanded = transform_service.expand(fig3)
        assert expanded.tied_rows == (('s0', 'alpha1'),)
        assert expanded.is_ambiguous(('s0', 'alpha1', 's1'))
        assert not expanded.is_ambiguous(('s0', 'alpha2', 's3'))
        assert transform_service.is_normal_form(expanded)

    def test_fig4_needs_no_fresh_states(self, fig4):
        expanded = transform_service.expand(fig4)
        assert expanded.fresh_states == ()
        assert set(expanded.tied_rows) == {('S0', 'b'), ('S1', 'a')}

    def test_edge_roles(self, fig_split):
        expanded = transform_service.expand(fig_split)
        switch = switch_name('s0', 'alpha2', 's1', 0)
        assert expanded.role(('s0', 'alpha2', switch)) == 'constant'
        assert expanded.role((switch, AUX_ACTION, 's1')) == 'parameter'
        assert expanded.role((switch, AUX_ACTION, 's2')) == 'complement'

    def test_rows_without_exact_expansion(self):
        document = {
            'parameters': [{'name': 'theta1'}, {'name': 'theta2'}],
            'states': [{'name': 's0'}, {'name': 'a'}, {'name': 'b'}, {'name': 'c'}],
            'initial': {'s0': '1'},
            'transitions': [
                {'from': 's0', 'action': 'x', 'to': 'a', 'prob': '1/2*theta1'},
                {'from': 's0', 'action': 'x', 'to': 'b', 'prob': 'theta2'},
                {'from': 's0', 'action': 'x', 'to': 'c', 'prob': '1 - 1/2*theta1 - theta2'},
                {'from': 'a', 'action': 'x', 'to': 'a', 'prob': '1'},
                {'from': 'b', 'action': 'x', 'to': 'b', 'prob': '1'},
                {'from': 'c', 'action': 'x', 'to': 'c', 'prob': '1'}
            ]
        }
        with pytest.raises(TransformError, match='no exact expansion'):
            transform_service.expand(model_service.parse_model(json.dumps(document)))


class TestEquivalence:
    """Expansion preserves transition probabilities and min-until values"""

    @pytest.mark.parametrize('name', ['fig_split', 'fig2', 'fig3', 'fig4'])
    def test_lineage_reproduces_every_original_expression(self, name, request):
        model = request.getfixturevalue(name)
        expanded = transform_service.expand(model)
        for t in model.transitions:
            key = (t.source, t.action, t.target)
            assert transform_service.lineage_expression(expanded, key) == t.probability

    @pytest.mark.parametrize('name, text', [
        ('fig_split', 'P>=0.5 [ true U "goal" ]'),
        ('fig2', 'P>=0.5 [ true U "goal" ]'),
        ('fig3', 'P<=0.5 [ true U "s1" ]'),
        ('fig4', 'P>=0.5 [ true U "complete" ]'),
    ])
    def test_min_until_values_agree(self, name, text, request, rng):
        model = request.getfixturevalue(name)
        prop = pctl_service.parse_property(text)
        expanded = transform_service.expand(model)
        for theta in valid_points(model, 100, rng):
            assert transform_service.verify_equivalence(model, expanded, theta, prop)

    def test_next_properties_are_not_compared(self, fig_split):
        prop = pctl_service.parse_property('P>=0.5 [ X "goal" ]')
        expanded = transform_service.expand(fig_split)
        with pytest.raises(TransformError):
            transform_service.verify_equivalence(fig_split, expanded, (0.5, 0.5), prop)


class TestExpandedDocument:
    """Serialised expansions"""

    def test_document_lists_lineage_by_edge_key(self, fig_split, tmp_path):
        expanded = transform_service.expand(fig_split)
        document = transform_service.expanded_document(expanded)
        assert document['lineage']['s0|alpha1|s3'] == [[
            f's0|alpha1|{switch_name("s0", "alpha1", "s3", 0)}',
            f'{switch_name("s0", "alpha1", "s3", 0)}|{AUX_ACTION}|s3'
        ]]
        path = tmp_path / 'expanded.json'
        transform_service.save_expanded(expanded, str(path))
        reloaded = json.loads(path.read_text(encoding='utf-8'))
        rebuilt = model_service.build_model(reloaded['model'])
        assert rebuilt.states == expanded.model.states
