# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled regression tree kernels. Mirrors ``_forest_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t
from libcpp.algorithm cimport sort as cpp_sort
from libcpp.pair cimport pair
from libcpp.vector cimport vector

cnp.import_array()

ctypedef pair[double, int64_t] keyed


cdef inline uint64_t _next(uint64_t* state) noexcept nogil:
    cdef uint64_t s = state[0]
    s ^= s >> 12
    s ^= s << 25
    s ^= s >> 27
    state[0] = s
    return s * <uint64_t>2685821657736338717ULL


def build_tree(X, y, int min_leaf, int max_features, seed):
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], d = Xv.shape[1]
    cdef uint64_t state = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    if state == 0:
        state = <uint64_t>0x9E3779B97F4A7C15ULL
    if max_features < 1:
        max_features = 1
    if max_features > d:
        max_features = <int>d
    if min_leaf < 1:
        min_leaf = 1

    cdef vector[int64_t] feature, left, right, count
    cdef vector[double] threshold, value
    cdef vector[int64_t] st_node, st_start, st_end
    cdef int64_t[::1] order = np.arange(n, dtype=np.int64)
    cdef int64_t[::1] tmp = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] feats = np.empty(d, dtype=np.int64)
    cdef vector[keyed] buf
    cdef double[::1] xs = np.empty(n, dtype=np.float64)
    cdef double[::1] ysorted = np.empty(n, dtype=np.float64)

    cdef Py_ssize_t node, start, end, m, i, j, k, f, fi, nleft, nright, lo, hi
    cdef double total, parent_score, best_score, best_thr, thr, sl, sr, score, nl, nr, first
    cdef int64_t best_f, t
    cdef bint constant

    feature.push_back(-1); threshold.push_back(0.0); left.push_back(-1)
    right.push_back(-1); value.push_back(0.0); count.push_back(0)
    st_node.push_back(0); st_start.push_back(0); st_end.push_back(n)

    with nogil:
        while st_node.size() > 0:
            node = st_node.back(); st_node.pop_back()
            start = st_start.back(); st_start.pop_back()
            end = st_end.back(); st_end.pop_back()
            m = end - start
            total = 0.0
            constant = True
            first = yv[order[start]]
            for i in range(start, end):
                total += yv[order[i]]
                if yv[order[i]] != first:
                    constant = False
            value[node] = total / m
            count[node] = m
            if m < 2 * min_leaf or constant:
                continue
            parent_score = total * total / m

            for j in range(d):
                feats[j] = j
            for j in range(max_features):
                k = j + <Py_ssize_t>((_next(&state) >> 11) % <uint64_t>(d - j))
                t = feats[j]; feats[j] = feats[k]; feats[k] = t

            best_score = parent_score
            best_f = -1
            best_thr = 0.0
            for fi in range(max_features):
                f = feats[fi]
                buf.clear()
                for i in range(start, end):
                    buf.push_back(keyed(Xv[order[i], f], order[i]))
                cpp_sort(buf.begin(), buf.end())
                sl = 0.0
                for i in range(m):
                    xs[i] = buf[i].first
                    ysorted[i] = yv[buf[i].second]
                # sequential prefix sums, same order as numpy.cumsum
                total = 0.0
                for i in range(m):
                    total += ysorted[i]
                sl = 0.0
                for i in range(m - 1):
                    sl += ysorted[i]
                    if i < min_leaf - 1 or i > m - min_leaf - 1:
                        continue
                    if not (xs[i] < xs[i + 1]):
                        continue
                    nl = <double>(i + 1)
                    nr = <double>(m - i - 1)
                    sr = total - sl
                    score = sl * sl / nl + sr * sr / nr
                    if score > best_score:
                        best_score = score
                        best_f = f
                        thr = 0.5 * (xs[i] + xs[i + 1])
                        if thr >= xs[i + 1]:
                            thr = xs[i]
                        best_thr = thr
            if best_f < 0 or best_score - parent_score <= 1e-12 * (parent_score if parent_score > 1.0 else 1.0):
                continue

            nleft = 0
            for i in range(start, end):
                if Xv[order[i], best_f] <= best_thr:
                    tmp[start + nleft] = order[i]
                    nleft += 1
            nright = 0
            for i in range(start, end):
                if not (Xv[order[i], best_f] <= best_thr):
                    tmp[start + nleft + nright] = order[i]
                    nright += 1
            for i in range(start, end):
                order[i] = tmp[i]

            lo = feature.size()
            hi = lo + 1
            for j in range(2):
                feature.push_back(-1); threshold.push_back(0.0); left.push_back(-1)
                right.push_back(-1); value.push_back(0.0); count.push_back(0)
            feature[node] = best_f
            threshold[node] = best_thr
            left[node] = lo
            right[node] = hi
            st_node.push_back(hi); st_start.push_back(start + nleft); st_end.push_back(end)
            st_node.push_back(lo); st_start.push_back(start); st_end.push_back(start + nleft)

    return (
        np.asarray(<int64_t[:feature.size()]>feature.data()).copy(),
        np.asarray(<double[:threshold.size()]>threshold.data()).copy(),
        np.asarray(<int64_t[:left.size()]>left.data()).copy(),
        np.asarray(<int64_t[:right.size()]>right.data()).copy(),
        np.asarray(<double[:value.size()]>value.data()).copy(),
        np.asarray(<int64_t[:count.size()]>count.data()).copy(),
    )


def predict_tree(feature, threshold, left, right, value, X):
    cdef int64_t[::1] fv = np.ascontiguousarray(feature, dtype=np.int64)
    cdef double[::1] tv = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef int64_t[::1] lv = np.ascontiguousarray(left, dtype=np.int64)
    cdef int64_t[::1] rv = np.ascontiguousarray(right, dtype=np.int64)
    cdef double[::1] vv = np.ascontiguousarray(value, dtype=np.float64)
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], i
    cdef int64_t node
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            node = 0
            while fv[node] >= 0:
                if Xv[i, fv[node]] <= tv[node]:
                    node = lv[node]
                else:
                    node = rv[node]
            ov[i] = vv[node]
    return out
