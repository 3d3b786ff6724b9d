"""Reports

Tables behind the usual figures of a driving primitive evaluation: the
moments and omega of every cluster by rank, the coupled pairs with their
mean speeds and measurements, and a short human readable summary.
"""

import logging

import pandas as pd

from dpeval import store as layout
from dpeval.clusters import find_idle_cluster
from dpeval.primitives import coverage

RANK_COLUMNS = ['rank', 'cluster_id', 'omega', 'point_count', 'mean_v', 'mean_a', 'var_v', 'var_a', 'cov_va']
COUPLING_COLUMNS = ['rank', 'cluster_id', 'omega', 'cluster_mean_v', 'label', 'primitive_mean_v', 'kl', 'E_i',
                    'contribution']


def cluster_rank_table(model):
    rows = []
    for position, (cluster_id, omega, (count, mean, cov)) in enumerate(model.retained()):
        rows.append([position, cluster_id, omega, int(count), mean[0], mean[1], cov[0][0], cov[1][1], cov[0][1]])
    return pd.DataFrame(rows, columns=RANK_COLUMNS)


def coupling_table(model, coupling, result, eval_primitives):
    by_label = {p.label: p for p in eval_primitives}
    moments = dict((cluster_id, m) for cluster_id, _, m in model.retained())
    per_cluster = dict((row['cluster_id'], row) for row in result.per_cluster)
    rows = []
    for entry in coupling.entries:
        row = per_cluster.get(entry.cluster_id, {})
        rows.append([entry.rank, entry.cluster_id, row.get('omega'), moments[entry.cluster_id][1][0], entry.label,
                     by_label[entry.label].mean[0], entry.kl, row.get('E_i'), row.get('contribution')])
    return pd.DataFrame(rows, columns=COUPLING_COLUMNS)


def summary_text(eval_vehicle, model, coupling, result, eval_primitives):
    idle = find_idle_cluster(model)
    retained = model.retained()
    lines = [
        "evaluated vehicle      : %s" % eval_vehicle,
        "channel                : %s" % result.channel.value,
        "E                      : %.6g" % result.E,
    ]
    if result.mpg is not None:
        lines.append("mpg                    : %.4f" % result.mpg)
    lines.extend([
        "retained clusters      : %d of %d" % (len(retained), model.k),
        "clustering objective   : %.6f" % model.objective,
        "idle cluster rank      : %s" % ("none" if idle is None else idle),
        "top cluster omega      : %.4f" % retained[0][1],
        "evaluated primitives   : %d" % len(eval_primitives),
        "top 38%% coverage       : %.4f" % coverage(eval_primitives, 0.38),
        "coupling multiplicity  : %s" % ", ".join("%d x%d" % (label, count)
                                                  for label, count in coupling.multiplicity().items()),
    ])
    return "\n".join(lines) + "\n"


def write_report(store, eval_vehicle, model, coupling, result, eval_primitives):
    """Write cluster_rank.csv, coupling.csv and summary.txt; returns their relative paths."""
    written = []
    tables = [('cluster_rank.csv', cluster_rank_table(model)),
              ('coupling.csv', coupling_table(model, coupling, result, eval_primitives))]
    for name, table in tables:
        relpath = layout.REPORT % (eval_vehicle, name)
        store.write_text(relpath, table.to_csv(index=False, lineterminator='\n', float_format='%.10g'))
        written.append(relpath)
    relpath = layout.REPORT % (eval_vehicle, 'summary.txt')
    store.write_text(relpath, summary_text(eval_vehicle, model, coupling, result, eval_primitives))
    written.append(relpath)
    logging.getLogger(__name__).debug("[%s] : report written to %s", eval_vehicle, ", ".join(written))
    return written
