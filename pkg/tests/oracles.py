"""Slow, independent reference implementations used as test oracles.

Nothing here imports the scoring or trie code under test; each oracle is
written from the model definitions directly.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import combinations

from normmine.symbols import ALPHABET_SIZE, END, N_CODES, SANCTION_CODES

# --- Pitman-Yor trie ------------------------------------------------------------


def reverse(seq):
    return tuple(s if s == END else (s + N_CODES if s < N_CODES else s - N_CODES) for s in seq)


def substring_counts(training, context):
    """c(context, e) for every e, by scanning every position of every sequence."""
    counts = {}
    k = len(context)
    for seq in training:
        for i in range(k, len(seq)):
            if tuple(seq[i - k : i]) == tuple(context):
                counts[seq[i]] = counts.get(seq[i], 0) + 1
    return counts


def py_prob(training, symbol, context, depth, d=Fraction(1, 2), theta=Fraction(1)):
    """Exact back-off recursion with one table per observed pair.

    ``training`` are the sequences exactly as the trie sees them (dual
    copies included by the caller). ``d`` and ``theta`` may be per-level
    lists indexed by context length.
    """
    context = tuple(context)[-depth:] if depth and len(context) > depth else tuple(context)
    ds = [Fraction(x) for x in d] if isinstance(d, (list, tuple)) else [Fraction(d)] * (len(context) + 1)
    ts = (
        [Fraction(x) for x in theta]
        if isinstance(theta, (list, tuple))
        else [Fraction(theta)] * (len(context) + 1)
    )
    p = Fraction(1, ALPHABET_SIZE)
    for k in range(len(context) + 1):
        u = context[len(context) - k :]
        counts = substring_counts(training, u)
        total = sum(counts.values())
        if total == 0:
            break
        c = counts.get(symbol, 0)
        t = 1 if c else 0
        types = len(counts)
        d, theta = ds[k], ts[k]
        p = (c - d * t) / (total + theta) + (theta + d * types) / (total + theta) * p
    return p


def dual(corpus):
    out = []
    for s in corpus:
        out.append(tuple(s))
        out.append(reverse(s))
    return out


# --- counting -------------------------------------------------------------------


def _dir(s):
    return "F" if s < N_CODES else "B"


def _code(s):
    return s % N_CODES + 1


def brute_counts(norm, corpus, opposite_sanctions=False):
    """(triggers, fulfilments, violations, sanctioned) by direct inspection."""
    t = f = v = sv = 0
    for seq in corpus:
        body = [s for s in seq if s != END]
        if norm.condition_code is None:
            doi, rest = {"F", "B"}, body
        else:
            hits = [i for i, s in enumerate(body) if _code(s) == norm.condition_code]
            if not hits:
                continue
            i = hits[0]
            same = _dir(body[i])
            other = "B" if same == "F" else "F"
            doi, rest = {same if norm.rel_dir == "+" else other}, body[i + 1 :]
        sdirs = {("B" if x == "F" else "F") for x in doi} if opposite_sanctions else doi
        t += 1
        targets = [i for i, s in enumerate(rest) if _code(s) == norm.event_code and _dir(s) in doi]
        if norm.modality == "O":
            ok = bool(targets)
            after = rest
        else:
            ok = not targets
            after = rest[targets[0] + 1 :] if targets else []
        if ok:
            f += 1
            continue
        v += 1
        if any(_code(s) in SANCTION_CODES and _dir(s) in sdirs for s in after):
            sv += 1
    return t, f, v, sv


# --- literal likelihood -----------------------------------------------------------


def _is_target(norm, doi, s):
    return s != END and _code(s) == norm.event_code and _dir(s) in doi


def _is_sanction(sdirs, s):
    return s != END and _code(s) in SANCTION_CODES and _dir(s) in sdirs


def _targets(norm, doi):
    return [c - 1 + (0 if d == "F" else N_CODES) for d in sorted(doi) for c in (norm.event_code,)]


def oracle_head(bank, norm, state, branch, doi, sdirs, symbol, history, drop_owed_end):
    """Scalar probability of one head, from prob_incl / prob_excl only.

    ``branch`` is "comp", "sanc" or "nosanc"; ``state`` one of "active",
    "viol", "done".
    """
    ec = {norm.event_code}
    if state == "active":
        incl = (branch == "comp") == (norm.modality == "O")
        if incl:
            p = lambda x: bank.prob_incl(doi, ec, x, history)
        else:
            p = lambda x: bank.prob_excl(doi, ec, x, history)
        owed = (branch == "comp") == (norm.modality == "O")
    elif state == "viol":
        if branch == "sanc":
            p = lambda x: bank.prob_incl(sdirs, SANCTION_CODES, x, history)
        else:
            p = lambda x: bank.prob_excl(sdirs, SANCTION_CODES, x, history)
        owed = branch == "sanc"
    else:
        p = lambda x: bank.base_.prob(x, history)
        owed = False
    dropped = []
    if norm.modality == "O" and branch != "comp":
        dropped += _targets(norm, doi)
    if drop_owed_end and owed:
        dropped.append(END)
    if symbol in dropped:
        return 0.0
    mass = sum(p(x) for x in dropped)
    return p(symbol) / (1.0 - mass)


def oracle_loglik(
    bank, norm, p_comp, p_sanc, seq, strict=False, opposite_sanctions=False, drop_owed_end=False
):
    """log p(seq | norm) by walking each branch with its own state logic."""
    seq = tuple(seq)
    if norm.condition_code is None:
        start, doi = 0, {"F", "B"}
    else:
        start = None
        for i, s in enumerate(seq):
            if s != END and _code(s) == norm.condition_code:
                same = _dir(s)
                other = "B" if same == "F" else "F"
                start, doi = i + 1, {same if norm.rel_dir == "+" else other}
                break
        if start is None:
            return sum(math.log(bank.base_.prob(s, seq[:i])) for i, s in enumerate(seq))
    sdirs = {("B" if x == "F" else "F") for x in doi} if opposite_sanctions else doi
    prefix = sum(math.log(bank.base_.prob(s, seq[:i])) for i, s in enumerate(seq[:start]))
    comp = p_comp ** len(doi)
    weights = {"comp": comp, "sanc": (1 - comp) * p_sanc, "nosanc": (1 - comp) * (1 - p_sanc)}
    total = 0.0
    for branch, w in weights.items():
        if w == 0.0:
            continue
        if branch == "comp" or norm.modality == "P":
            state = "active"
        else:
            state = "viol"
        prob = 1.0
        just_violated = state == "viol"
        for i in range(start, len(seq)):
            s = seq[i]
            h = oracle_head(bank, norm, state, branch, doi, sdirs, s, seq[:i], drop_owed_end)
            prob *= h
            if prob == 0.0:
                break
            if s == END:
                break
            if state == "active":
                if _is_target(norm, doi, s):
                    state = "done" if norm.modality == "O" else "viol"
                    just_violated = state == "viol"
                    continue
            elif state == "viol":
                if _is_sanction(sdirs, s):
                    state = "done"
                elif strict and just_violated and branch == "sanc":
                    prob = 0.0
                    break
            just_violated = False
        final_ok = {
            "comp": state == ("done" if norm.modality == "O" else "active"),
            "sanc": state == "done",
            "nosanc": state == "viol",
        }[branch]
        if final_ok:
            total += w * prob
    if total == 0.0:
        return -math.inf
    return prefix + math.log(total)


# --- graphs ---------------------------------------------------------------------------


def transitive_closure_groups(nodes, docs):
    """Components of the co-mention relation by repeated relaxation."""
    nodes = sorted(set(nodes))
    related = {n: {n} for n in nodes}
    for members in docs:
        for a, b in combinations(sorted(set(members)), 2):
            related[a].add(b)
            related[b].add(a)
    changed = True
    while changed:
        changed = False
        for n in nodes:
            grown = set(related[n])
            for m in related[n]:
                grown |= related[m]
            if grown != related[n]:
                related[n] = grown
                changed = True
    return sorted({tuple(sorted(g)) for g in related.values()})
