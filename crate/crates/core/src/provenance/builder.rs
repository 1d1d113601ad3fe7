use std::collections::BTreeMap;

use serde_json::Value;

use super::{Agent, EdgeKind, EventType, Layer, ProvActivity, ProvBundle, ProvEdge, ProvEntity};

/// Incremental construction of a [`ProvBundle`].
#[derive(Debug, Default)]
pub struct BundleBuilder {
    bundle: ProvBundle,
}

impl BundleBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn agent(mut self, agent_id: &str, kind: &str, name: &str) -> Self {
        self.bundle.agents.push(Agent {
            agent_id: agent_id.into(),
            kind: kind.into(),
            name: name.into(),
        });
        self
    }

    pub fn entity(mut self, entity_id: &str, layer: Layer, hash: &str, version_label: &str, path: Option<&str>) -> Self {
        self.bundle.entities.push(ProvEntity {
            entity_id: entity_id.into(),
            layer,
            hash: hash.into(),
            version_label: version_label.into(),
            path: path.map(String::from),
        });
        self
    }

    /// Adds an activity with its `used` and `wasGeneratedBy` edges.
    #[allow(clippy::too_many_arguments)]
    pub fn activity(
        mut self,
        activity_id: &str,
        event_type: EventType,
        timestamp: &str,
        agent_id: &str,
        fields: BTreeMap<String, Value>,
        used: &[&str],
        generated: &[&str],
    ) -> Self {
        self.bundle.activities.push(ProvActivity {
            activity_id: activity_id.into(),
            event_type,
            timestamp: timestamp.into(),
            agent_id: agent_id.into(),
            fields,
        });
        self.edges(activity_id, used, generated)
    }

    pub fn edges(mut self, activity_id: &str, used: &[&str], generated: &[&str]) -> Self {
        for (kind, ids) in [(EdgeKind::Used, used), (EdgeKind::WasGeneratedBy, generated)] {
            for id in ids {
                self.bundle.edges.push(ProvEdge {
                    kind,
                    activity_id: activity_id.into(),
                    entity_id: (*id).into(),
                });
            }
        }
        self
    }

    pub fn push_activity(mut self, activity: ProvActivity, used: &[&str], generated: &[&str]) -> Self {
        let id = activity.activity_id.clone();
        self.bundle.activities.push(activity);
        self.edges(&id, used, generated)
    }

    pub fn build(self) -> ProvBundle {
        self.bundle
    }
}
