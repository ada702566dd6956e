"""Critical points at infinity and the alternating-sum existence criteria.

Tuples are unordered sets of distinct critical points.  A tuple tau of
size p has index ``p - 1 + sum_j (n - itilde(y_j))``.  The two families
are the subsets of the critical stratum whose interaction matrix has
rho > 0 (``BetaCritical``) and all subsets of K^+ minus that stratum
(``SubCritical``).  With A and B the signed sums over these families,
the criteria are

    below/at n - 2s:  S = A + B - A*B = 1 - (1 - A)(1 - B)
    at/above n - 2s:  S = A + sum over single points of K^+ minus stratum

and a solution exists whenever S != 1.
"""
import enum
import math
from dataclasses import dataclass, field

from .errors import CertError
from .interaction import check_A1, members_of, subset_masks

CENSUS_LIMIT = 2 ** 20


class Family(enum.Enum):
    BETA_CRITICAL = "BetaCritical"
    SUB_CRITICAL = "SubCritical"
    CROSS = "Cross"


class Theorem(enum.Enum):
    TH2 = "TH2"            # all beta in (1, n - 2 sigma]
    TH1 = "TH1"            # all beta in [n - 2 sigma, n)
    NOT_APPLICABLE = "NotApplicable"


@dataclass(frozen=True)
class TupleRecord:
    members: tuple        # labels, sorted in input order
    family: Family
    index_inf: int
    rho: float = None

    @property
    def p(self):
        return len(self.members)

    @property
    def sign(self):
        return -1 if self.index_inf % 2 else 1

    def to_json(self):
        d = {"members": list(self.members), "p": self.p, "family": self.family.value,
             "index_inf": self.index_inf, "sign": self.sign}
        if self.rho is not None:
            d["rho"] = self.rho
        return d


@dataclass
class Certificate:
    theorem: Theorem
    A: int
    B: int
    S: int
    exists: bool         # None when the criterion does not apply
    cross: int = 0
    caveats: list = field(default_factory=list)   # invalidate the verdict
    notes: list = field(default_factory=list)     # informational only

    @property
    def exit_code(self):
        if self.theorem is Theorem.NOT_APPLICABLE or self.caveats:
            return 20
        return 0 if self.exists else 10

    def to_json(self):
        return {"theorem": self.theorem.value, "A": self.A, "B": self.B, "cross": self.cross,
                "S": self.S, "exists": self.exists, "caveats": list(self.caveats),
                "notes": list(self.notes), "exit_code": self.exit_code}


def tuple_index(n, itildes):
    """p - 1 + sum (n - itilde)."""
    return len(itildes) - 1 + sum(n - it for it in itildes)


def determine_regime(classified):
    """Which criterion applies given the flatness regime of every point."""
    regimes = {cl.regime for _, cl in classified}
    if regimes <= {"below", "critical"}:
        return Theorem.TH2
    if regimes <= {"critical", "above"}:
        return Theorem.TH1
    return Theorem.NOT_APPLICABLE


def _check_size(count, force):
    if count > CENSUS_LIMIT and not force:
        raise CertError("census-too-large",
                        f"{count} subsets exceed 2^20; pass force=True (--force) to proceed")


def enumerate_families(classified, consts, n, sigma, max_p=None, force=False,
                       degeneracy_rel_tol=1e-9, a1=None):
    """TupleRecords of both families, plus the A1 report and caveats.

    ``classified`` is a list of (CriticalPoint, Classification).  Records
    come in canonical order: BetaCritical before SubCritical, each by
    size then lexicographic member position.
    """
    crit = [cp for cp, cl in classified if cl.in_K_beta_critical]
    crit_cl = [cl for _, cl in classified if cl.in_K_beta_critical]
    sub = [(cp, cl) for cp, cl in classified if cl.in_K_plus and not cl.in_K_beta_critical]
    mp_crit = len(crit) if max_p is None else min(max_p, len(crit))
    mp_sub = len(sub) if max_p is None else min(max_p, len(sub))
    count = sum(math.comb(len(crit), k) for k in range(1, mp_crit + 1))
    count += sum(math.comb(len(sub), k) for k in range(1, mp_sub + 1))
    _check_size(count, force)

    caveats = []
    if a1 is None:
        a1 = check_A1(crit, consts, n, sigma, mp_crit, degeneracy_rel_tol)
    records = []
    for ix, rho, margin, status in a1.subsets:
        if status == "degenerate":
            caveats.append("A1 fails: rho ~ 0 for {" + ", ".join(crit[i].label for i in ix)
                           + f"}} (rho={rho:.3e}, margin={margin:.3e})")
            continue
        if status != "positive":
            continue
        records.append(TupleRecord(
            members=tuple(crit[i].label for i in ix), family=Family.BETA_CRITICAL,
            index_inf=tuple_index(n, [crit_cl[i].itilde for i in ix]), rho=rho))
    for mask in _masks(len(sub), mp_sub):
        ix = members_of(mask)
        records.append(TupleRecord(
            members=tuple(sub[i][0].label for i in ix), family=Family.SUB_CRITICAL,
            index_inf=tuple_index(n, [sub[i][1].itilde for i in ix])))
    return records, a1, caveats


def _masks(m, max_p):
    return [int(x) for x in subset_masks(m, max_p)] if m else []


def evaluate_certificate(records, theorem, ordered_tuples=False, caveats=()):
    """Integer evaluation of the criterion from the family records.

    With ``ordered_tuples`` each p-subset counts p! times (diagnostic
    mode for the tuple-vs-set reading of the sums).
    """
    def weight(r):
        return math.factorial(r.p) if ordered_tuples else 1

    A = sum(r.sign * weight(r) for r in records if r.family is Family.BETA_CRITICAL)
    if theorem is Theorem.TH2:
        B = sum(r.sign * weight(r) for r in records if r.family is Family.SUB_CRITICAL)
        cross = A * B
        S = A + B - cross
    elif theorem is Theorem.TH1:
        B = sum(r.sign for r in records if r.family is Family.SUB_CRITICAL and r.p == 1)
        cross = 0
        S = A + B
    else:
        return Certificate(theorem, 0, 0, 0, None,
                           caveats=list(caveats) + ["mixed flatness regimes: criterion not applicable"])
    return Certificate(theorem, A, B, S, S != 1, cross=cross, caveats=list(caveats))


def points_at_infinity(records, theorem):
    """Every critical point at infinity entering the count, with its index.

    For the below-critical criterion this adds, for each pair of records
    from the two families, their union with index i + i' + 1, whose sign
    is minus the product of the two signs.
    """
    beta = [r for r in records if r.family is Family.BETA_CRITICAL]
    sub = [r for r in records if r.family is Family.SUB_CRITICAL]
    if theorem is Theorem.TH1:
        return beta + [r for r in sub if r.p == 1]
    if theorem is Theorem.NOT_APPLICABLE:
        return []
    out = beta + sub
    for rb in beta:
        for rs in sub:
            out.append(TupleRecord(members=rb.members + rs.members, family=Family.CROSS,
                                   index_inf=rb.index_inf + rs.index_inf + 1))
    return out


def sort_key(r):
    return (r.p, r.index_inf, r.family.value, r.members)


def euler_trace(records):
    """Running Euler characteristic chi(J_b) across the sorted records.

    Starts from chi(empty) = 0; each level adds (-1)^index.
    """
    trace = []
    chi = 0
    for r in sorted(records, key=sort_key):
        chi += r.sign
        trace.append(chi)
    return trace
