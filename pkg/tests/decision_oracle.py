"""Independent line-by-line oracle for the adaptive coding decision.

Deliberately written as a direct transcription of the published
pseudocode over precomputed (rate_plain, rate_filtered, dist_plain,
dist_filtered) tuples, with no shared code with the production engine.
The engine's transcripts must match this one exactly.
"""


def algorithm_transcript(tuples, crp, mqc, pf, tfl):
    """Returns [(f_cf, con_after_frame)] for each frame.

    `crp` is a plain integer here; callers model the "never refresh"
    configuration by passing a period larger than the sequence.
    """
    con = 0
    out = []
    for t, (r1, r2, d1, d2) in enumerate(tuples):
        f_cf = 0
        lpl_ok = False
        if con >= mqc:
            # evaluated lazily: only relevant once the budget is spent
            lpl = (r2 - r1) / r1 - pf * (1 - t / tfl)
            lpl_ok = lpl < 0
        if d2 < d1 and (con < mqc or lpl_ok):
            con = con + 1
            f_cf = 1
        if t % crp == 0:
            con = 0
        out.append((f_cf, con))
    return out
