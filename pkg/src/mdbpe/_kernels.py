"""Compiled inner loops for the count/replace training passes.

The corpus is packed into flat int32 arrays (one segment per grid) so the
per-pass loops run as compiled code:

  ids[cell]       local instance id of the cell (0 <= id < grid cells)
  id_class[id]    token class per instance id
  anchor[id]      flat index of the scan-minimal cell of the instance
  head[id]        first cell of the instance's cell list
  nxt[cell]       next cell in the instance's cell list (-1 terminates)
  tail[id]        last cell of the instance's cell list

id-indexed and cell-indexed arrays share the same segment layout because
local ids are drawn from cell indices. Counting first-occurrence-dedupes
ordered instance pairs with a stamped open-addressing table; constellation
counts accumulate in a second open-addressing table whose packed int64 keys
order exactly like (class_p, class_n, v_pn) tuples, so arg-max tie-breaking
is a plain numeric min.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MIX = np.uint64(0x9E3779B97F4A7C15)


@njit(cache=True, nogil=True, inline="always")
def _slot(key, mask):
    h = np.uint64(key) * _MIX
    h ^= h >> np.uint64(31)
    return np.int64(h & np.uint64(mask))


@njit(cache=True, nogil=True)
def count_pass(
    offsets,
    dims_table,
    strides_table,
    axes_enabled,
    ids,
    id_class,
    anchor,
    nxt,
    pair_keys,
    pair_stamp,
    epoch_base,
    tab_keys,
    tab_vals,
    tab_used,
    cls_bits,
    v_bits,
    v_offs,
    unit_v_packed,
    v_total_bits,
):
    """One counting pass over a packed segment list.

    Returns (pair_visits, tab_used, overflow). ``overflow`` is 1 when the
    constellation table exceeded its load limit; counts are then partial and
    the caller must retry with a larger table.

    A pair of single-cell instances occupies exactly one slot and its offset
    vector is the negated axis unit, so it skips both the dedup table and the
    anchor decomposition (``unit_v_packed[k]`` holds that pre-packed offset).
    """
    n_grids = offsets.shape[0] - 1
    ndim = dims_table.shape[1]
    pair_mask = pair_keys.shape[0] - 1
    tab_mask = tab_keys.shape[0] - 1
    tab_limit = (tab_keys.shape[0] * 7) // 10
    used = tab_used
    visits = np.int64(0)
    coords = np.zeros(ndim, dtype=np.int64)

    for g in range(n_grids):
        base = offsets[g]
        n_cells = offsets[g + 1] - base
        epoch = epoch_base + g + 1
        for k in range(ndim):
            coords[k] = 0
        for flat in range(n_cells):
            p_id = ids[base + flat]
            p_single = anchor[base + p_id] == flat and nxt[base + flat] == -1
            for k in range(ndim):
                if not axes_enabled[k]:
                    continue
                if coords[k] + 1 >= dims_table[g, k]:
                    continue
                visits += 1
                nb = flat + strides_table[g, k]
                n_id = ids[base + nb]
                if n_id == p_id:
                    continue

                if (
                    p_single
                    and anchor[base + n_id] == nb
                    and nxt[base + nb] == -1
                ):
                    key = np.int64(id_class[base + p_id])
                    key = (key << cls_bits) | np.int64(id_class[base + n_id])
                    key = (key << v_total_bits) | unit_v_packed[k]
                else:
                    pkey = np.int64(p_id) * n_cells + n_id
                    s = _slot(pkey, pair_mask)
                    seen = False
                    while pair_stamp[s] == epoch:
                        if pair_keys[s] == pkey:
                            seen = True
                            break
                        s = (s + 1) & pair_mask
                    if seen:
                        continue
                    pair_keys[s] = pkey
                    pair_stamp[s] = epoch

                    a_p = np.int64(anchor[base + p_id])
                    a_n = np.int64(anchor[base + n_id])
                    key = np.int64(id_class[base + p_id])
                    key = (key << cls_bits) | np.int64(id_class[base + n_id])
                    for ax in range(ndim):
                        c_p = (a_p // strides_table[g, ax]) % dims_table[g, ax]
                        c_n = (a_n // strides_table[g, ax]) % dims_table[g, ax]
                        key = (key << v_bits[ax]) | (c_p - c_n + v_offs[ax])

                s = _slot(key, tab_mask)
                while True:
                    if tab_keys[s] == key:
                        tab_vals[s] += 1
                        break
                    if tab_keys[s] == -1:
                        if used >= tab_limit:
                            return visits, used, np.int64(1)
                        tab_keys[s] = key
                        tab_vals[s] = 1
                        used += 1
                        break
                    s = (s + 1) & tab_mask
            j = ndim - 1
            while j >= 0:
                coords[j] += 1
                if coords[j] == dims_table[g, j]:
                    coords[j] = 0
                    j -= 1
                else:
                    break
    return visits, used, np.int64(0)


@njit(cache=True, nogil=True)
def replace_pass(
    offsets,
    dims_table,
    strides_table,
    axes_enabled,
    ids,
    id_class,
    anchor,
    head,
    nxt,
    tail,
    rule_p,
    rule_n,
    rule_v,
    new_class,
):
    """Greedy single-scan replacement against live state; returns merge count.

    A merged instance immediately takes the new class, so it can never match
    the rule again within the pass; untouched instances keep class and anchor,
    which is what makes the single scan equivalent to checking live state.
    """
    n_grids = offsets.shape[0] - 1
    ndim = dims_table.shape[1]
    merges = np.int64(0)
    coords = np.zeros(ndim, dtype=np.int64)

    for g in range(n_grids):
        base = offsets[g]
        n_cells = offsets[g + 1] - base
        for k in range(ndim):
            coords[k] = 0
        for flat in range(n_cells):
            for k in range(ndim):
                if not axes_enabled[k]:
                    continue
                if coords[k] + 1 >= dims_table[g, k]:
                    continue
                p_id = ids[base + flat]
                n_id = ids[base + flat + strides_table[g, k]]
                if n_id == p_id:
                    continue
                if id_class[base + p_id] != rule_p:
                    continue
                if id_class[base + n_id] != rule_n:
                    continue
                a_p = np.int64(anchor[base + p_id])
                a_n = np.int64(anchor[base + n_id])
                match = True
                for ax in range(ndim):
                    c_p = (a_p // strides_table[g, ax]) % dims_table[g, ax]
                    c_n = (a_n // strides_table[g, ax]) % dims_table[g, ax]
                    if c_p - c_n != rule_v[ax]:
                        match = False
                        break
                if not match:
                    continue

                c = head[base + n_id]
                while c != -1:
                    ids[base + c] = p_id
                    c = nxt[base + c]
                nxt[base + tail[base + p_id]] = head[base + n_id]
                tail[base + p_id] = tail[base + n_id]
                id_class[base + p_id] = new_class
                if a_n < a_p:
                    anchor[base + p_id] = anchor[base + n_id]
                merges += 1
            j = ndim - 1
            while j >= 0:
                coords[j] += 1
                if coords[j] == dims_table[g, j]:
                    coords[j] = 0
                    j -= 1
                else:
                    break
    return merges
