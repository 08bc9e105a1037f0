"""Brute-force reference formulas written with plain Python loops.

Nothing here imports the ``dias`` package; tests compare the vectorised
torch implementation against these scalar loops.
"""

import math

EPS = 1e-8


def dot(u, v):
    return sum(a * b for a, b in zip(u, v))


def norm(u):
    return math.sqrt(sum(a * a for a in u))


def cosine(u, v):
    return dot(u, v) / ((norm(u) + EPS) * (norm(v) + EPS))


def normalize(u):
    n = norm(u) + EPS
    return [a / n for a in u]


def affine(row, weight, bias):
    d = len(bias)
    return [sum(row[k] * weight[k][j] for k in range(len(row))) + bias[j] for j in range(d)]


def project(rows, weight, bias):
    return [normalize(affine(r, weight, bias)) for r in rows]


def aggregate(query, context):
    out = []
    for q in query:
        s = [max(0.0, cosine(q, c)) for c in context]
        tot = sum(s) + EPS
        out.append([sum(s[j] * context[j][k] for j in range(len(context))) / tot
                    for k in range(len(q))])
    return out


def pool(rows):
    d = len(rows[0])
    mean = [sum(r[k] for r in rows) / len(rows) for k in range(d)]
    return normalize(mean)


def pair_similarity(img, txt):
    """Cosine between the attended image and attended text globals."""
    v_hat = pool(aggregate(img, txt))
    t_hat = pool(aggregate(txt, img))
    return cosine(v_hat, t_hat), v_hat, t_hat


def pearson(a, b):
    ma = sum(a) / len(a)
    mb = sum(b) / len(b)
    ca = [x - ma for x in a]
    cb = [x - mb for x in b]
    return dot(ca, cb) / ((norm(ca) + EPS) * (norm(cb) + EPS))


def correlation(image_means, text_means):
    """image_means/text_means: per-instance pooled vectors (N x d)."""
    d = len(image_means[0])
    rows_v = [[m[i] for m in image_means] for i in range(d)]
    rows_t = [[m[i] for m in text_means] for i in range(d)]
    return [[pearson(rows_v[i], rows_t[j]) for j in range(d)] for i in range(d)]


def dim_loss_naive(c):
    d = len(c)
    return sum(-c[i][i] if i == j else c[i][j] for i in range(d) for j in range(d))


def dim_loss_normalized(c, signed=True):
    d = len(c)
    total = 0.0
    for i in range(d):
        row = sum(abs(c[i][j]) for j in range(d))
        col = sum(abs(c[j][i]) for j in range(d))
        diag = c[i][i] if signed else abs(c[i][i])
        total -= diag / max(row, EPS) + diag / max(col, EPS)
    return total


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def mean_std(vals):
    mu = sum(vals) / len(vals)
    return mu, math.sqrt(sum((v - mu) ** 2 for v in vals) / len(vals))


def thresholds(residual, beta_row, beta_col):
    n = len(residual)
    p = [[sigmoid(-residual[i][j]) for j in range(n)] for i in range(n)]
    row, col = [], []
    for i in range(n):
        mu, th = mean_std(p[i])
        row.append(mu + beta_row * th)
    for j in range(n):
        mu, th = mean_std([p[i][j] for i in range(n)])
        col.append(mu + beta_col * th)
    return p, row, col


def hard_mask(residual, beta_row, beta_col):
    n = len(residual)
    _, row, col = thresholds(residual, beta_row, beta_col)
    return [[1 if residual[i][j] > max(row[i], col[j]) else 0 for j in range(n)]
            for i in range(n)]


def smooth_mask(residual, beta_row, beta_col, tau):
    n = len(residual)
    _, row, col = thresholds(residual, beta_row, beta_col)
    return [[sigmoid((residual[i][j] - max(row[i], col[j])) / tau) for j in range(n)]
            for i in range(n)]


def masked_sq_sum(residual, mask):
    n = len(residual)
    return sum(mask[i][j] * residual[i][j] ** 2 for i in range(n) for j in range(n))


def total_loss(images, texts, w_img, b_img, w_txt, b_txt, neg_txt, neg_img,
               betas, alpha=0.2, w_dim=10.0, w_inter=0.05, w_intra=0.1, tau=0.1):
    """Full objective on one batch, every term recomputed from scratch.

    ``images``/``texts`` are lists of raw local matrices; ``betas`` is
    (inter_row, inter_col, intra_row, intra_col).
    """
    n = len(images)
    v_loc = [project(x, w_img, b_img) for x in images]
    t_loc = [project(x, w_txt, b_txt) for x in texts]

    s = [[0.0] * n for _ in range(n)]
    v_diag, t_diag = [None] * n, [None] * n
    for a in range(n):
        for b in range(n):
            s[a][b], vh, th = pair_similarity(v_loc[a], t_loc[b])
            if a == b:
                v_diag[a], t_diag[a] = vh, th

    loc = 0.0
    for i in range(n):
        loc += max(0.0, alpha - s[i][i] + s[i][neg_txt[i]])
        loc += max(0.0, alpha - s[i][i] + s[neg_img[i]][i])
    loc /= n

    v_mean = [[sum(r[k] for r in m) / len(m) for k in range(len(m[0]))] for m in v_loc]
    t_mean = [[sum(r[k] for r in m) / len(m) for k in range(len(m[0]))] for m in t_loc]
    dim = dim_loss_normalized(correlation(v_mean, t_mean))

    x = [[1.0 - s[i][j] for j in range(n)] for i in range(n)]
    r_inter = [[abs(x[i][j] - x[j][i]) for j in range(n)] for i in range(n)]
    y = [[0.0 if i == j else 1.0 - cosine(v_diag[i], v_diag[j]) for j in range(n)]
         for i in range(n)]
    z = [[0.0 if i == j else 1.0 - cosine(t_diag[i], t_diag[j]) for j in range(n)]
         for i in range(n)]
    r_intra = [[abs(y[i][j] - z[i][j]) for j in range(n)] for i in range(n)]

    inter = masked_sq_sum(r_inter, smooth_mask(r_inter, betas[0], betas[1], tau)) / n ** 2
    intra = masked_sq_sum(r_intra, smooth_mask(r_intra, betas[2], betas[3], tau)) / n ** 2
    return loc + w_dim * dim + w_inter * inter + w_intra * intra


def recall_at_k(sim, gt, k):
    """sim: list of rows; gt: per-row set of correct columns."""
    hits = 0
    for q, row in enumerate(sim):
        order = sorted(range(len(row)), key=lambda j: (-row[j], j))
        if any(j in gt[q] for j in order[:k]):
            hits += 1
    return 100.0 * hits / len(sim)
