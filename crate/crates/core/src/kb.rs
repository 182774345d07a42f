//! Immutable in-memory knowledge base over `head<TAB>relation<TAB>tail`
//! triples, with an entity catalog of surface names and CVT flags.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::text::relation_words;

/// Upper bound on core-chain candidates for a single topic entity.
pub const MAX_CHAIN_CANDIDATES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entity {
    pub key: String,
    pub name: String,
    pub cvt: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub name: String,
    pub words: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// A catalog line before id assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityRecord {
    pub key: String,
    pub name: String,
    pub cvt: bool,
}

/// A path of one or two relations walked from a topic entity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationChain(Vec<RelationId>);

impl RelationChain {
    pub fn new(relations: Vec<RelationId>) -> Result<Self> {
        if relations.is_empty() || relations.len() > 2 {
            return Err(Error::Domain(format!(
                "relation chains have length 1 or 2, got {}",
                relations.len()
            )));
        }
        Ok(RelationChain(relations))
    }

    pub fn single(r: RelationId) -> Self {
        RelationChain(vec![r])
    }

    pub fn relations(&self) -> &[RelationId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Filter `(v, c, r_c)`: the node at `node` steps along the chain (1 is the
/// first hop, `chain.len()` the answer) must share an `r_c` edge with `c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constraint {
    pub node: usize,
    pub entity: EntityId,
    pub relation: RelationId,
}

/// An edge touching a queried node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Neighbor {
    pub node: EntityId,
    pub neighbor: EntityId,
    pub relation: RelationId,
    /// `node -relation-> neighbor` when true, else `neighbor -relation-> node`.
    pub outgoing: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    entities: Vec<Entity>,
    entity_index: HashMap<String, EntityId>,
    relations: Vec<Relation>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    out: Vec<Vec<(RelationId, EntityId)>>,
    inc: Vec<Vec<(RelationId, EntityId)>>,
}

fn fields<'a>(line: &'a str, n: usize, lineno: usize, what: &str) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = line.split('\t').collect();
    if parts.len() != n || parts.iter().any(|p| p.trim().is_empty()) {
        return Err(Error::parse(
            lineno,
            format!("expected {n} non-empty tab-separated {what} fields, got {:?}", line),
        ));
    }
    Ok(parts.into_iter().map(str::trim).collect())
}

fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(e.into())),
        Ok(l) => {
            let t = l.trim_end_matches('\r');
            if t.trim().is_empty() || t.starts_with('#') {
                None
            } else {
                Some(Ok((i + 1, t.to_string())))
            }
        }
    })
}

/// Reads `head<TAB>relation<TAB>tail` lines; blank and `#` lines are skipped.
pub fn parse_triples<R: BufRead>(reader: R) -> Result<Vec<(String, String, String)>> {
    content_lines(reader)
        .map(|l| {
            let (n, line) = l?;
            let f = fields(&line, 3, n, "triple")?;
            Ok((f[0].to_string(), f[1].to_string(), f[2].to_string()))
        })
        .collect()
}

/// Reads `id<TAB>surface name<TAB>cvt|plain` lines.
pub fn parse_catalog<R: BufRead>(reader: R) -> Result<Vec<EntityRecord>> {
    let mut seen = BTreeSet::new();
    content_lines(reader)
        .map(|l| {
            let (n, line) = l?;
            let f = fields(&line, 3, n, "catalog")?;
            let cvt = match f[2] {
                "cvt" => true,
                "plain" => false,
                other => return Err(Error::parse(n, format!("flag must be cvt or plain, got {other:?}"))),
            };
            if !seen.insert(f[0].to_string()) {
                return Err(Error::parse(n, format!("duplicate entity id {:?}", f[0])));
            }
            Ok(EntityRecord {
                key: f[0].to_string(),
                name: f[1].to_string(),
                cvt,
            })
        })
        .collect()
}

impl KnowledgeBase {
    /// Builds a KB. Entities appearing only in triples get their id as name
    /// and the plain flag. Ids follow sorted key and relation-name order, so
    /// the result does not depend on input order.
    pub fn from_records(catalog: Vec<EntityRecord>, triples: Vec<(String, String, String)>) -> Result<Self> {
        let mut ents: BTreeMap<String, Entity> = BTreeMap::new();
        for rec in catalog {
            if ents.contains_key(&rec.key) {
                return Err(Error::Domain(format!("duplicate entity id {:?}", rec.key)));
            }
            ents.insert(
                rec.key.clone(),
                Entity {
                    key: rec.key,
                    name: rec.name,
                    cvt: rec.cvt,
                },
            );
        }
        let mut rel_names = BTreeSet::new();
        for (h, r, t) in &triples {
            for k in [h, t] {
                ents.entry(k.clone()).or_insert_with(|| Entity {
                    key: k.clone(),
                    name: k.clone(),
                    cvt: false,
                });
            }
            rel_names.insert(r.clone());
        }
        let entities: Vec<Entity> = ents.into_values().collect();
        let entity_index = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.key.clone(), EntityId(i as u32)))
            .collect::<HashMap<_, _>>();
        let relations: Vec<Relation> = rel_names
            .into_iter()
            .map(|name| Relation {
                words: relation_words(&name),
                name,
            })
            .collect();
        let relation_index = relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.name.clone(), RelationId(i as u32)))
            .collect::<HashMap<_, _>>();
        let set: BTreeSet<Triple> = triples
            .iter()
            .map(|(h, r, t)| Triple {
                head: entity_index[h],
                relation: relation_index[r],
                tail: entity_index[t],
            })
            .collect();
        let triples: Vec<Triple> = set.into_iter().collect();
        let mut out = vec![Vec::new(); entities.len()];
        let mut inc = vec![Vec::new(); entities.len()];
        for t in &triples {
            out[t.head.index()].push((t.relation, t.tail));
            inc[t.tail.index()].push((t.relation, t.head));
        }
        for list in out.iter_mut().chain(inc.iter_mut()) {
            list.sort();
        }
        Ok(KnowledgeBase {
            entities,
            entity_index,
            relations,
            relation_index,
            triples,
            out,
            inc,
        })
    }

    /// Loads a triple file and an optional entity catalog.
    pub fn load<R: BufRead, C: BufRead>(triples: R, catalog: Option<C>) -> Result<Self> {
        let triples = parse_triples(triples)?;
        let catalog = catalog.map(parse_catalog).transpose()?.unwrap_or_default();
        KnowledgeBase::from_records(catalog, triples)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> {
        (0..self.entities.len() as u32).map(EntityId)
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationId> {
        (0..self.relations.len() as u32).map(RelationId)
    }

    pub fn entity_id(&self, key: &str) -> Option<EntityId> {
        self.entity_index.get(key).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(name).copied()
    }

    pub fn resolve_entity(&self, key: &str) -> Result<EntityId> {
        self.entity_id(key)
            .ok_or_else(|| Error::Lookup(format!("unknown entity {key:?}")))
    }

    pub fn resolve_relation(&self, name: &str) -> Result<RelationId> {
        self.relation_id(name)
            .ok_or_else(|| Error::Lookup(format!("unknown relation {name:?}")))
    }

    /// Resolves `r1-r2`-style names into a chain.
    pub fn resolve_chain<S: AsRef<str>>(&self, names: &[S]) -> Result<RelationChain> {
        RelationChain::new(
            names
                .iter()
                .map(|n| self.resolve_relation(n.as_ref()))
                .collect::<Result<_>>()?,
        )
    }

    fn check_entity(&self, e: EntityId) -> Result<()> {
        if e.index() < self.entities.len() {
            Ok(())
        } else {
            Err(Error::Lookup(format!("entity id {} out of range", e.0)))
        }
    }

    fn check_relation(&self, r: RelationId) -> Result<()> {
        if r.index() < self.relations.len() {
            Ok(())
        } else {
            Err(Error::Lookup(format!("relation id {} out of range", r.0)))
        }
    }

    /// Panics on an id from another KB.
    pub fn entity(&self, e: EntityId) -> &Entity {
        &self.entities[e.index()]
    }

    /// Panics on an id from another KB.
    pub fn relation(&self, r: RelationId) -> &Relation {
        &self.relations[r.index()]
    }

    /// Relation names of a chain, first hop first.
    pub fn chain_names(&self, chain: &RelationChain) -> Vec<&str> {
        chain.relations().iter().map(|r| self.relation(*r).name.as_str()).collect()
    }

    /// Hyphenated chain form, e.g. `starring_roles-series`.
    pub fn chain_label(&self, chain: &RelationChain) -> String {
        self.chain_names(chain).join("-")
    }

    /// Sorted outgoing `(relation, tail)` pairs.
    pub fn outgoing(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.out[e.index()]
    }

    /// Sorted incoming `(relation, head)` pairs.
    pub fn incoming(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.inc[e.index()]
    }

    pub fn relations_of_entity(&self, e: EntityId) -> Result<BTreeSet<RelationId>> {
        self.check_entity(e)?;
        Ok(self.out[e.index()].iter().map(|(r, _)| *r).collect())
    }

    /// All length-1 chains from `e` and every `r1-r2` reachable through a
    /// tail of `(e, r1)`, in lexicographic order of relation names.
    pub fn core_chain_candidates(&self, e: EntityId) -> Result<Vec<RelationChain>> {
        self.check_entity(e)?;
        let mut chains = BTreeSet::new();
        for &(r1, mid) in &self.out[e.index()] {
            chains.insert(vec![r1]);
            for &(r2, _) in &self.out[mid.index()] {
                chains.insert(vec![r1, r2]);
                if chains.len() > MAX_CHAIN_CANDIDATES {
                    return Err(Error::Overflow(format!(
                        "entity {:?} has more than {MAX_CHAIN_CANDIDATES} candidate chains",
                        self.entity(e).key
                    )));
                }
            }
        }
        Ok(chains.into_iter().map(RelationChain).collect())
    }

    /// Every walk of `chain` from `e` as its node sequence `[e, n1, (n2)]`.
    pub fn walk(&self, e: EntityId, chain: &RelationChain) -> Result<Vec<Vec<EntityId>>> {
        self.check_entity(e)?;
        let mut paths = vec![vec![e]];
        for &r in chain.relations() {
            self.check_relation(r)?;
            let mut next = Vec::new();
            for p in &paths {
                let last = *p.last().expect("paths are non-empty");
                for &(rr, t) in &self.out[last.index()] {
                    if rr == r {
                        let mut q = p.clone();
                        q.push(t);
                        next.push(q);
                    }
                }
            }
            paths = next;
        }
        Ok(paths)
    }

    /// Whether an `r` edge joins `a` and `b` in either direction.
    pub fn connected(&self, a: EntityId, r: RelationId, b: EntityId) -> bool {
        self.out[a.index()].binary_search(&(r, b)).is_ok() || self.inc[a.index()].binary_search(&(r, b)).is_ok()
    }

    /// Terminal nodes of the walks of `chain` from `e` that satisfy every
    /// constraint.
    pub fn execute_query(
        &self,
        e: EntityId,
        chain: &RelationChain,
        constraints: &[Constraint],
    ) -> Result<BTreeSet<EntityId>> {
        for c in constraints {
            self.check_entity(c.entity)?;
            self.check_relation(c.relation)?;
            if c.node == 0 || c.node > chain.len() {
                return Err(Error::Domain(format!(
                    "constraint node {} outside chain of length {}",
                    c.node,
                    chain.len()
                )));
            }
        }
        Ok(self
            .walk(e, chain)?
            .into_iter()
            .filter(|p| constraints.iter().all(|c| self.connected(p[c.node], c.relation, c.entity)))
            .map(|p| *p.last().expect("walks are non-empty"))
            .collect())
    }

    /// Edges in both directions touching any of `nodes`, skipping edges whose
    /// other end is itself in `nodes`.
    pub fn subgraph_neighbors(&self, nodes: &[EntityId]) -> Vec<Neighbor> {
        let excluded: BTreeSet<EntityId> = nodes.iter().copied().collect();
        let mut result = Vec::new();
        let mut done = BTreeSet::new();
        for &v in nodes {
            if v.index() >= self.entities.len() || !done.insert(v) {
                continue;
            }
            for (list, outgoing) in [(&self.out[v.index()], true), (&self.inc[v.index()], false)] {
                for &(r, c) in list {
                    if !excluded.contains(&c) {
                        result.push(Neighbor {
                            node: v,
                            neighbor: c,
                            relation: r,
                            outgoing,
                        });
                    }
                }
            }
        }
        result
    }

    /// Canonical triple file: sorted by head key, relation name, tail key.
    pub fn write_triples<W: Write>(&self, mut w: W) -> Result<()> {
        let mut lines: Vec<(&str, &str, &str)> = self
            .triples
            .iter()
            .map(|t| {
                (
                    self.entity(t.head).key.as_str(),
                    self.relation(t.relation).name.as_str(),
                    self.entity(t.tail).key.as_str(),
                )
            })
            .collect();
        lines.sort();
        for (h, r, t) in lines {
            writeln!(w, "{h}\t{r}\t{t}")?;
        }
        Ok(())
    }

    /// Canonical catalog file, sorted by key.
    pub fn write_catalog<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.entities {
            writeln!(w, "{}\t{}\t{}", e.key, e.name, if e.cvt { "cvt" } else { "plain" })?;
        }
        Ok(())
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}
