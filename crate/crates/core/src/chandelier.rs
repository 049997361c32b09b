//! Chandelier assembly: rooted trees with L branches, each an M-edge wire
//! ending in a K-edge bulb drawn from a filtered catalog.
//!
//! Bulbs within one chandelier are pairwise non-isomorphic, so the rooted
//! automorphism count factorizes as the product of the bulb counts: wires
//! contribute nothing (single-child chains) and the root's branches are
//! pairwise distinct. Families stream their members as bulb-id combinations
//! and assemble trees on demand.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::treegen::{BulbCatalog, RootedTree};
use crate::{Error, Result};

/// One assembled chandelier; `bulb_ids` index into the family's catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Chandelier {
    pub bulb_ids: Vec<usize>,
    pub wire_len: usize,
    pub as_tree: RootedTree,
    /// N + 1 where N = L(K+M).
    pub n_vertices: usize,
    pub aut: BigUint,
}

/// The family of all C(|J|, L) chandeliers over a bulb catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct ChandelierFamily {
    pub bulbs: BulbCatalog,
    pub l: usize,
    pub m: usize,
    pub family_size: BigUint,
}

pub fn build_family(bulbs: BulbCatalog, l: usize, m: usize) -> Result<ChandelierFamily> {
    if l == 0 {
        return Err(Error::invalid("L must be at least 1"));
    }
    if m == 0 {
        return Err(Error::invalid("M must be at least 1"));
    }
    if l > bulbs.len() {
        return Err(Error::invalid(format!(
            "L = {l} exceeds catalog size {} (bulbs must be distinct)",
            bulbs.len()
        )));
    }
    let family_size = binomial(bulbs.len(), l);
    Ok(ChandelierFamily { bulbs, l, m, family_size })
}

fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::ZERO;
    }
    let mut out = BigUint::one();
    for i in 0..k.min(n - k) {
        out *= BigUint::from(n - i);
        out /= BigUint::from(i + 1);
    }
    out
}

impl ChandelierFamily {
    /// Non-root vertex count N = L(K+M) of every member.
    pub fn n_non_root(&self) -> usize {
        self.l * (self.bulbs.k + self.m)
    }

    /// Assembles the member with the given strictly increasing bulb ids.
    pub fn assemble(&self, bulb_ids: &[usize]) -> Result<Chandelier> {
        if bulb_ids.len() != self.l {
            return Err(Error::invalid(format!(
                "expected {} bulb ids, got {}",
                self.l,
                bulb_ids.len()
            )));
        }
        if !bulb_ids.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("bulb ids must be strictly increasing"));
        }
        if bulb_ids.iter().any(|&id| id >= self.bulbs.len()) {
            return Err(Error::invalid("bulb id out of catalog range"));
        }

        // One branch per bulb: wire depths 1..M, then the bulb shifted so its
        // root sits at depth M. Branches in descending canonical order keep
        // the assembled sequence canonical; distinct bulbs never tie.
        let mut branches: Vec<Vec<u8>> = bulb_ids
            .iter()
            .map(|&id| {
                let bulb = &self.bulbs.trees[id];
                let mut seq: Vec<u8> = (1..self.m as u8).collect();
                seq.extend(bulb.level_seq.iter().map(|&d| d + self.m as u8));
                seq
            })
            .collect();
        branches.sort_by(|x, y| y.cmp(x));
        let mut seq = vec![0u8];
        for b in &branches {
            seq.extend_from_slice(b);
        }

        let as_tree = RootedTree::from_level_seq(&seq)?;
        debug_assert_eq!(as_tree.level_seq, seq, "assembly left canonical form");
        let aut: BigUint =
            bulb_ids.iter().map(|&id| self.bulbs.trees[id].aut.clone()).product();
        debug_assert_eq!(as_tree.aut, aut, "product rule disagrees with recursive count");
        Ok(Chandelier {
            bulb_ids: bulb_ids.to_vec(),
            wire_len: self.m,
            n_vertices: self.n_non_root() + 1,
            aut,
            as_tree,
        })
    }

    /// Members in lexicographic bulb-id order, assembled on demand.
    pub fn members(&self) -> Members<'_> {
        Members { family: self, next_ids: Some((0..self.l).collect()) }
    }

    /// DP cost estimate |T|·N·3^N·n² for feasibility reporting.
    pub fn dp_cost_estimate(&self, n: usize) -> f64 {
        let size = self.family_size.to_f64().unwrap_or(f64::INFINITY);
        let nn = self.n_non_root() as f64;
        size * nn * 3f64.powf(nn) * (n as f64).powi(2)
    }
}

pub struct Members<'a> {
    family: &'a ChandelierFamily,
    next_ids: Option<Vec<usize>>,
}

impl Iterator for Members<'_> {
    type Item = Chandelier;

    fn next(&mut self) -> Option<Chandelier> {
        let ids = self.next_ids.take()?;
        let member = self.family.assemble(&ids).expect("generated ids are valid");
        // Advance the combination odometer.
        let total = self.family.bulbs.len();
        let l = self.family.l;
        let mut next = ids;
        let mut pos = l;
        while pos > 0 {
            pos -= 1;
            if next[pos] < total - (l - pos) {
                next[pos] += 1;
                for i in (pos + 1)..l {
                    next[i] = next[i - 1] + 1;
                }
                self.next_ids = Some(next);
                break;
            }
        }
        Some(member)
    }
}

/// Desk-scale family presets; the asymptotic parameter schedule is
/// meaningless at small n, so these are fixed small shapes bounded by the
/// 3^{N+1} color-mask guard.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// K=2, L=2, M=1: one member, N = 6.
    Tiny,
    /// K=3, L=2, M=1: six members, N = 8.
    Small,
    /// K=3, L=3, M=2: four members, N = 15.
    Medium,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "small" => Ok(Preset::Small),
            "medium" => Ok(Preset::Medium),
            other => Err(Error::invalid(format!(
                "unknown preset {other:?} (expected tiny, small, or medium)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Tiny => "tiny",
            Preset::Small => "small",
            Preset::Medium => "medium",
        }
    }

    pub fn klm(&self) -> (usize, usize, usize) {
        match self {
            Preset::Tiny => (2, 2, 1),
            Preset::Small => (3, 2, 1),
            Preset::Medium => (3, 3, 2),
        }
    }

    pub fn build(&self) -> Result<ChandelierFamily> {
        let (k, l, m) = self.klm();
        build_family(crate::treegen::build_catalog(k, None, None)?, l, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treegen::{aut_count, build_catalog};
    use std::collections::BTreeSet;

    #[test]
    fn family_sizes() {
        let f = build_family(build_catalog(3, None, None).unwrap(), 2, 1).unwrap();
        assert_eq!(f.family_size, BigUint::from(6u32));
        assert_eq!(f.members().count(), 6);

        let f = build_family(build_catalog(3, None, None).unwrap(), 4, 1).unwrap();
        assert_eq!(f.family_size, BigUint::one());
        assert_eq!(f.members().count(), 1);

        assert!(build_family(build_catalog(2, None, None).unwrap(), 3, 1).is_err());
        assert!(build_family(build_catalog(2, None, None).unwrap(), 0, 1).is_err());
        assert!(build_family(build_catalog(2, None, None).unwrap(), 1, 0).is_err());
    }

    #[test]
    fn tiny_preset_member() {
        let f = Preset::Tiny.build().unwrap();
        assert_eq!(f.n_non_root(), 6);
        let members: Vec<_> = f.members().collect();
        assert_eq!(members.len(), 1);
        let c = &members[0];
        assert_eq!(c.n_vertices, 7);
        assert_eq!(c.as_tree.k_edges, 6);
        // Bulbs are the 2-path (aut 1) and the 2-star (aut 2).
        assert_eq!(c.aut, BigUint::from(2u32));
        assert_eq!(aut_count(&c.as_tree), c.aut);
    }

    #[test]
    fn assemble_path_chandelier() {
        // L=1, M=1, bulb = single edge: the bulb root sits at the wire end,
        // so the whole chandelier is a 2-edge path with trivial symmetry.
        let f = build_family(build_catalog(1, None, None).unwrap(), 1, 1).unwrap();
        let c = f.assemble(&[0]).unwrap();
        assert_eq!(c.as_tree.level_seq, vec![0, 1, 2]);
        assert_eq!(c.as_tree.k_edges, 2);
        assert_eq!(c.aut, BigUint::one());
    }

    #[test]
    fn assemble_mixed_bulbs() {
        // L=2, M=2, bulbs = {2-path, 2-star}: 8 edges, aut = 1·2.
        let f = build_family(build_catalog(2, None, None).unwrap(), 2, 2).unwrap();
        let c = f.assemble(&[0, 1]).unwrap();
        assert_eq!(c.as_tree.k_edges, 8);
        assert_eq!(c.n_vertices, 9);
        assert_eq!(c.aut, BigUint::from(2u32));
        assert_eq!(aut_count(&c.as_tree), c.aut);
    }

    #[test]
    fn assemble_rejects_bad_ids() {
        let f = Preset::Small.build().unwrap();
        assert!(f.assemble(&[0]).is_err());
        assert!(f.assemble(&[1, 0]).is_err());
        assert!(f.assemble(&[0, 0]).is_err());
        assert!(f.assemble(&[0, 99]).is_err());
    }

    #[test]
    fn members_are_pairwise_non_isomorphic() {
        // Exhaustive over every family with |J| <= 6 worth of combinations.
        for (k, l, m) in [(3, 2, 1), (3, 3, 1), (3, 2, 2), (4, 2, 1)] {
            let catalog = build_catalog(k, None, None).unwrap();
            let catalog_len = catalog.len();
            let f = build_family(catalog, l, m).unwrap();
            let seqs: BTreeSet<Vec<u8>> =
                f.members().map(|c| c.as_tree.level_seq.clone()).collect();
            let expect = f.members().count();
            assert_eq!(seqs.len(), expect, "K={k} L={l} M={m} |J|={catalog_len}");
        }
    }

    #[test]
    fn member_order_is_lexicographic() {
        let f = Preset::Small.build().unwrap();
        let ids: Vec<Vec<usize>> = f.members().map(|c| c.bulb_ids).collect();
        assert_eq!(ids, vec![
            vec![0, 1],
            vec![0, 2],
            vec![0, 3],
            vec![1, 2],
            vec![1, 3],
            vec![2, 3]
        ]);
    }

    #[test]
    fn product_rule_across_small_family() {
        let f = build_family(build_catalog(4, None, None).unwrap(), 3, 1).unwrap();
        for c in f.members() {
            let product: BigUint =
                c.bulb_ids.iter().map(|&id| f.bulbs.trees[id].aut.clone()).product();
            assert_eq!(aut_count(&c.as_tree), product);
        }
    }

    #[test]
    fn presets_parse_and_guard() {
        assert_eq!(Preset::parse("tiny").unwrap(), Preset::Tiny);
        assert!(Preset::parse("huge").is_err());
        // Medium respects the 3^{N+1} <= 2^26 mask guard.
        let f = Preset::Medium.build().unwrap();
        let n = f.n_non_root();
        assert_eq!(n, 15);
        assert!(3u64.pow(n as u32 + 1) <= 1 << 26);
    }

    #[test]
    fn cost_estimate_matches_formula() {
        let f = Preset::Small.build().unwrap();
        let expect = 6.0 * 8.0 * 3f64.powf(8.0) * 1.0e6;
        assert!((f.dp_cost_estimate(1000) - expect).abs() / expect < 1e-12);
    }
}
