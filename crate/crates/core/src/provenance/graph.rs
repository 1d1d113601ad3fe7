//! Graph queries: cycle detection, lineage and version diffs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{generator_index, EdgeKind, EventType, ProvBundle};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
enum Node<'a> {
    Entity(&'a str),
    Activity(&'a str),
}

impl Node<'_> {
    fn label(&self) -> String {
        match self {
            Node::Entity(id) => format!("entity:{id}"),
            Node::Activity(id) => format!("activity:{id}"),
        }
    }
}

/// Returns the nodes of one cycle, if the graph oriented entity ->
/// generating activity -> used entities has any.
pub(super) fn find_cycle(bundle: &ProvBundle) -> Option<Vec<String>> {
    let mut adj: BTreeMap<Node, Vec<Node>> = BTreeMap::new();
    for e in &bundle.edges {
        let (from, to) = match e.kind {
            EdgeKind::WasGeneratedBy => (Node::Entity(&e.entity_id), Node::Activity(&e.activity_id)),
            EdgeKind::Used => (Node::Activity(&e.activity_id), Node::Entity(&e.entity_id)),
        };
        adj.entry(from).or_default().push(to);
        adj.entry(to).or_default();
    }
    for v in adj.values_mut() {
        v.sort();
        v.dedup();
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: HashMap<Node, Mark> = HashMap::new();
    for &start in adj.keys() {
        if marks.contains_key(&start) {
            continue;
        }
        // Iterative DFS; `path` mirrors the open nodes on the stack.
        let mut stack: Vec<(Node, usize)> = vec![(start, 0)];
        let mut path: Vec<Node> = vec![start];
        marks.insert(start, Mark::Open);
        while let Some((node, next)) = stack.last_mut() {
            let succ = &adj[node];
            if *next < succ.len() {
                let child = succ[*next];
                *next += 1;
                match marks.get(&child) {
                    Some(Mark::Open) => {
                        let at = path.iter().position(|n| *n == child).expect("open node is on path");
                        let mut cycle: Vec<String> = path[at..].iter().map(Node::label).collect();
                        cycle.push(child.label());
                        return Some(cycle);
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(child, Mark::Open);
                        stack.push((child, 0));
                        path.push(child);
                    }
                }
            } else {
                marks.insert(*node, Mark::Done);
                stack.pop();
                path.pop();
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageStep {
    pub activity_id: String,
    pub event_type: EventType,
    pub agent_id: String,
    pub used: Vec<String>,
    pub generated: Vec<String>,
}

/// Transitive history of one entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub root: String,
    /// Longest chain of generating activities above the root; 0 if it has no generator.
    pub depth: usize,
    /// Ancestor activities, topologically ordered (earliest first, ties by id).
    pub steps: Vec<LineageStep>,
    /// Ancestor entities, sorted; excludes the root.
    pub entities: Vec<String>,
    pub agents: Vec<String>,
}

impl Lineage {
    pub fn event_chain(&self) -> Vec<EventType> {
        self.steps.iter().map(|s| s.event_type).collect()
    }
}

pub fn lineage(bundle: &ProvBundle, entity_id: &str) -> Result<Lineage> {
    if bundle.entity(entity_id).is_none() {
        return Err(Error::UnknownEntity(entity_id.to_string()));
    }
    let gens = generator_index(bundle);
    let mut activities: BTreeSet<&str> = BTreeSet::new();
    let mut entities: BTreeSet<&str> = BTreeSet::new();
    let mut frontier = vec![entity_id];
    let mut visited: BTreeSet<&str> = BTreeSet::from([entity_id]);
    while let Some(e) = frontier.pop() {
        if let Some(&act) = gens.get(e) {
            if activities.insert(act) {
                for used in bundle.used_by(act) {
                    if visited.insert(used) {
                        entities.insert(used);
                        frontier.push(used);
                    }
                }
            }
        }
    }

    // Kahn's algorithm over ancestor activities; A -> B when B used an entity A generated.
    let mut preds: BTreeMap<&str, BTreeSet<&str>> = activities.iter().map(|a| (*a, BTreeSet::new())).collect();
    for &act in &activities {
        for used in bundle.used_by(act) {
            if let Some(&g) = gens.get(used) {
                if activities.contains(g) && g != act {
                    preds.get_mut(act).expect("present").insert(g);
                }
            }
        }
    }
    let mut order: Vec<&str> = Vec::with_capacity(activities.len());
    let mut remaining = preds.clone();
    let mut ready: BTreeSet<&str> = remaining.iter().filter(|(_, p)| p.is_empty()).map(|(a, _)| *a).collect();
    while let Some(a) = ready.pop_first() {
        remaining.remove(a);
        order.push(a);
        for (b, p) in remaining.iter_mut() {
            if p.remove(a) && p.is_empty() {
                ready.insert(b);
            }
        }
    }
    // Leftovers only occur in cyclic graphs; append them deterministically.
    order.extend(remaining.keys().copied());

    let mut depth_of: HashMap<&str, usize> = HashMap::new();
    for &a in &order {
        let d = 1 + preds[a].iter().map(|p| depth_of.get(p).copied().unwrap_or(0)).max().unwrap_or(0);
        depth_of.insert(a, d);
    }
    let depth = gens.get(entity_id).map(|a| depth_of.get(a).copied().unwrap_or(0)).unwrap_or(0);

    let mut agents = BTreeSet::new();
    let steps = order
        .iter()
        .filter_map(|id| bundle.activity(id))
        .map(|a| {
            agents.insert(a.agent_id.clone());
            LineageStep {
                activity_id: a.activity_id.clone(),
                event_type: a.event_type,
                agent_id: a.agent_id.clone(),
                used: bundle.used_by(&a.activity_id).into_iter().map(String::from).collect(),
                generated: bundle.generated_by(&a.activity_id).into_iter().map(String::from).collect(),
            }
        })
        .collect();
    entities.remove(entity_id);
    Ok(Lineage {
        root: entity_id.to_string(),
        depth,
        steps,
        entities: entities.into_iter().map(String::from).collect(),
        agents: agents.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldChange {
    pub event_type: EventType,
    pub activity_a: String,
    pub activity_b: String,
    pub field: String,
    pub value_a: Value,
    pub value_b: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityChange {
    pub entity_a: String,
    pub entity_b: String,
    pub hash_a: String,
    pub hash_b: String,
}

/// Difference between the lineages of two entities.
///
/// Activities with the same id are shared. When the lineages overlap at all,
/// unshared activities of the same event type are paired in topological
/// order and compared field by field; their generated entities are paired
/// likewise. Disjoint lineages are listed in full on both sides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProvDiff {
    pub activities_only_in_a: Vec<String>,
    pub activities_only_in_b: Vec<String>,
    pub entities_only_in_a: Vec<String>,
    pub entities_only_in_b: Vec<String>,
    pub field_changes: Vec<FieldChange>,
    pub entity_changes: Vec<EntityChange>,
}

impl ProvDiff {
    pub fn is_empty(&self) -> bool {
        self.activities_only_in_a.is_empty()
            && self.activities_only_in_b.is_empty()
            && self.entities_only_in_a.is_empty()
            && self.entities_only_in_b.is_empty()
            && self.field_changes.is_empty()
            && self.entity_changes.is_empty()
    }

    /// The same diff seen from the other side.
    pub fn swapped(&self) -> ProvDiff {
        ProvDiff {
            activities_only_in_a: self.activities_only_in_b.clone(),
            activities_only_in_b: self.activities_only_in_a.clone(),
            entities_only_in_a: self.entities_only_in_b.clone(),
            entities_only_in_b: self.entities_only_in_a.clone(),
            field_changes: self
                .field_changes
                .iter()
                .map(|c| FieldChange {
                    event_type: c.event_type,
                    activity_a: c.activity_b.clone(),
                    activity_b: c.activity_a.clone(),
                    field: c.field.clone(),
                    value_a: c.value_b.clone(),
                    value_b: c.value_a.clone(),
                })
                .collect(),
            entity_changes: self
                .entity_changes
                .iter()
                .map(|c| EntityChange {
                    entity_a: c.entity_b.clone(),
                    entity_b: c.entity_a.clone(),
                    hash_a: c.hash_b.clone(),
                    hash_b: c.hash_a.clone(),
                })
                .collect(),
        }
    }
}

pub fn diff_versions(bundle: &ProvBundle, entity_a: &str, entity_b: &str) -> Result<ProvDiff> {
    let la = lineage(bundle, entity_a)?;
    let lb = lineage(bundle, entity_b)?;

    let ents = |l: &Lineage| -> BTreeSet<String> {
        l.entities.iter().cloned().chain(std::iter::once(l.root.clone())).collect()
    };
    let (ea, eb) = (ents(&la), ents(&lb));
    let acts_a: BTreeSet<&str> = la.steps.iter().map(|s| s.activity_id.as_str()).collect();
    let acts_b: BTreeSet<&str> = lb.steps.iter().map(|s| s.activity_id.as_str()).collect();
    let overlapping = !acts_a.is_disjoint(&acts_b) || !ea.is_disjoint(&eb);

    let mut diff = ProvDiff::default();
    let mut paired_entities: BTreeSet<String> = BTreeSet::new();
    let unshared = |l: &Lineage, other: &BTreeSet<&str>| -> Vec<LineageStep> {
        l.steps.iter().filter(|s| !other.contains(s.activity_id.as_str())).cloned().collect()
    };
    let (ua, ub) = (unshared(&la, &acts_b), unshared(&lb, &acts_a));

    if overlapping {
        let by_type = |steps: &[LineageStep]| -> BTreeMap<EventType, Vec<LineageStep>> {
            let mut m: BTreeMap<EventType, Vec<LineageStep>> = BTreeMap::new();
            for s in steps {
                m.entry(s.event_type).or_default().push(s.clone());
            }
            m
        };
        let (ta, tb) = (by_type(&ua), by_type(&ub));
        for et in EventType::ALL {
            let empty = Vec::new();
            let sa = ta.get(&et).unwrap_or(&empty);
            let sb = tb.get(&et).unwrap_or(&empty);
            for (x, y) in sa.iter().zip(sb) {
                let ax = bundle.activity(&x.activity_id).expect("lineage activity exists");
                let ay = bundle.activity(&y.activity_id).expect("lineage activity exists");
                let keys: BTreeSet<&String> = ax.fields.keys().chain(ay.fields.keys()).collect();
                for k in keys {
                    let va = ax.fields.get(k).cloned().unwrap_or(Value::Null);
                    let vb = ay.fields.get(k).cloned().unwrap_or(Value::Null);
                    if va != vb {
                        diff.field_changes.push(FieldChange {
                            event_type: et,
                            activity_a: x.activity_id.clone(),
                            activity_b: y.activity_id.clone(),
                            field: k.clone(),
                            value_a: va,
                            value_b: vb,
                        });
                    }
                }
                let ga: Vec<&String> = x.generated.iter().filter(|e| !eb.contains(*e)).collect();
                let gb: Vec<&String> = y.generated.iter().filter(|e| !ea.contains(*e)).collect();
                for (p, q) in ga.iter().zip(&gb) {
                    let hp = bundle.entity(p).map(|e| e.hash.clone()).unwrap_or_default();
                    let hq = bundle.entity(q).map(|e| e.hash.clone()).unwrap_or_default();
                    paired_entities.insert((*p).clone());
                    paired_entities.insert((*q).clone());
                    diff.entity_changes.push(EntityChange {
                        entity_a: (*p).clone(),
                        entity_b: (*q).clone(),
                        hash_a: hp,
                        hash_b: hq,
                    });
                }
            }
            for x in sa.iter().skip(sb.len()) {
                diff.activities_only_in_a.push(x.activity_id.clone());
            }
            for y in sb.iter().skip(sa.len()) {
                diff.activities_only_in_b.push(y.activity_id.clone());
            }
        }
        diff.activities_only_in_a.sort();
        diff.activities_only_in_b.sort();
    } else {
        diff.activities_only_in_a = ua.iter().map(|s| s.activity_id.clone()).collect();
        diff.activities_only_in_b = ub.iter().map(|s| s.activity_id.clone()).collect();
        diff.activities_only_in_a.sort();
        diff.activities_only_in_b.sort();
    }
    diff.entities_only_in_a = ea.difference(&eb).filter(|e| !paired_entities.contains(*e)).cloned().collect();
    diff.entities_only_in_b = eb.difference(&ea).filter(|e| !paired_entities.contains(*e)).cloned().collect();
    Ok(diff)
}
