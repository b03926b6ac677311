import itertools

import pytest

from reqflow.errors import IllegalTransition
from reqflow.model import Role
from reqflow.workflow import (
    CrState,
    LEGAL_STATE_PAIRS,
    TERMINAL_STATES,
    TRANSITION_TABLE,
    Vote,
    VoteDecision,
    apply_transition,
    guard_allows,
    new_change_request,
    rule_for,
    tally_decision,
)

SPEC_CHAIN = {
    (CrState.SUBMITTED, CrState.FORMULATED),
    (CrState.FORMULATED, CrState.PM_REVIEW),
    (CrState.PM_REVIEW, CrState.REJECTED_BY_PM),
    (CrState.PM_REVIEW, CrState.VALIDATING),
    (CrState.VALIDATING, CrState.FORM_GENERATED),
    (CrState.FORM_GENERATED, CrState.CCB_REVIEW),
    (CrState.CCB_REVIEW, CrState.CCB_REJECTED),
    (CrState.CCB_REVIEW, CrState.APPROVED),
    (CrState.APPROVED, CrState.IMPACT_ANALYZED),
    (CrState.IMPACT_ANALYZED, CrState.IMPLEMENTING),
    (CrState.IMPLEMENTING, CrState.VERIFYING),
    (CrState.VERIFYING, CrState.CLOSED),
}


class TestTransitionTable:
    def test_relation_matches_the_documented_chain(self):
        assert LEGAL_STATE_PAIRS == frozenset(SPEC_CHAIN)

    def test_terminal_states_have_no_outgoing_rows(self):
        for rule in TRANSITION_TABLE:
            assert rule.state not in TERMINAL_STATES

    def test_every_state_reachable_from_submitted(self):
        reachable = {CrState.SUBMITTED}
        changed = True
        while changed:
            changed = False
            for a, b in LEGAL_STATE_PAIRS:
                if a in reachable and b not in reachable:
                    reachable.add(b)
                    changed = True
        assert reachable == set(CrState)

    def test_rule_lookup_and_illegal(self):
        rule = rule_for(CrState.PM_REVIEW, "triage_reject")
        assert rule.next is CrState.REJECTED_BY_PM
        with pytest.raises(IllegalTransition):
            rule_for(CrState.CLOSED, "formulate")

    def test_apply_transition_appends_history(self):
        cr = new_change_request("CR-1", "alice", "hq", {"R1"}, "d", 3, ts=1)
        assert [h.state for h in cr.history] == [CrState.SUBMITTED]
        apply_transition(cr, "formulate", "alice", 2)
        assert cr.state is CrState.FORMULATED
        assert cr.history[-1].state is CrState.FORMULATED
        assert cr.history[-1].actor == "alice"

    def test_self_loop_event_keeps_history(self):
        cr = new_change_request("CR-1", "alice", "hq", {"R1"}, "d", 3, ts=1)
        cr.state = CrState.CCB_REVIEW
        before = list(cr.history)
        apply_transition(cr, "vote", "m1", 5)
        assert cr.history == before  # no state change, no history entry


class TestGuards:
    def test_auto_guard_never_offered_to_humans(self):
        for role in Role:
            assert guard_allows("auto", role, is_author=True) is False

    def test_any_guard(self):
        for role in Role:
            assert guard_allows("any", role, is_author=False) is True

    def test_role_guard(self):
        assert guard_allows("role=ProjectManager", Role.PROJECT_MANAGER, False)
        assert not guard_allows("role=ProjectManager", Role.CCB_MEMBER, False)

    def test_role_or_author_guard(self):
        guard = "role=ChangeRequestManager|author"
        assert guard_allows(guard, Role.CHANGE_REQUEST_MANAGER, False)
        assert guard_allows(guard, Role.STAKEHOLDER, True)
        assert not guard_allows(guard, Role.STAKEHOLDER, False)

    def test_guard_outcome_defined_for_every_rule_and_role(self):
        for rule in TRANSITION_TABLE:
            for role in Role:
                for is_author in (False, True):
                    outcome = guard_allows(rule.guard, role, is_author)
                    assert outcome in (True, False)


def oracle_decision(approvals, rejections, abstentions, quorum):
    participation = approvals + rejections + abstentions
    return "Approved" if participation >= quorum and approvals > rejections else "Rejected"


def votes_of(approvals, rejections, abstentions):
    votes = {}
    n = 0
    for count, decision in (
        (approvals, VoteDecision.APPROVE),
        (rejections, VoteDecision.REJECT),
        (abstentions, VoteDecision.ABSTAIN),
    ):
        for _ in range(count):
            votes[f"m{n}"] = Vote(member=f"m{n}", decision=decision)
            n += 1
    return votes


class TestTallyRule:
    def test_worked_examples(self):
        assert tally_decision(votes_of(2, 1, 0), 3).outcome == "Approved"
        assert tally_decision(votes_of(1, 1, 0), 2).outcome == "Rejected"
        assert tally_decision(votes_of(1, 0, 0), 2).outcome == "Rejected"

    def test_exhaustive_against_oracle_up_to_seven_members(self):
        for a, r, ab in itertools.product(range(8), repeat=3):
            if a + r + ab > 7 or a + r + ab == 0:
                continue
            for quorum in range(1, 8):
                decision = tally_decision(votes_of(a, r, ab), quorum)
                assert decision.outcome == oracle_decision(a, r, ab, quorum)
                assert (decision.approvals, decision.rejections, decision.abstentions) == (
                    a,
                    r,
                    ab,
                )

    def test_deterministic_pure_function(self):
        v = votes_of(3, 2, 1)
        assert tally_decision(v, 4) == tally_decision(dict(reversed(list(v.items()))), 4)

    def test_revote_replaces(self):
        votes = {"m1": Vote(member="m1", decision=VoteDecision.APPROVE)}
        votes["m1"] = Vote(member="m1", decision=VoteDecision.REJECT)
        decision = tally_decision(votes, 1)
        assert decision.approvals == 0 and decision.rejections == 1
