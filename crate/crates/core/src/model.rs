//! A trained classifier: the knowledge base a query is answered against.

use thiserror::Error;

use crate::data::Dataset;
use crate::direct::{relevant_kb, DirectError, MaxArity, SubsetCounter};
use crate::inference::{infer_pos, InferenceError, InferenceResult};
use crate::kb::{merge, KbError, KnowledgeBase, WeightedClause};
use crate::query::{Domains, Query};
use crate::tree::{build_id3, kb_from_tree, PathMode, TreeError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Direct(#[from] DirectError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Clauses from the root-to-leaf paths of an ID3 tree.
    Tree,
    /// Clauses from the paths to every node of an ID3 tree.
    TreeAll,
    /// Clauses counted over all feature-value subsets.
    Direct,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Tree => "tree",
            Method::TreeAll => "tree-all",
            Method::Direct => "direct",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tree" => Ok(Method::Tree),
            "tree-all" => Ok(Method::TreeAll),
            "direct" => Ok(Method::Direct),
            other => Err(format!("unknown method {other:?} (expected tree, tree-all or direct)")),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    /// Every query is answered against the whole knowledge base.
    Full(KnowledgeBase),
    /// Each query is answered against the rules whose body lies inside it.
    Relevant(KnowledgeBase),
    /// Direct counts plus supplied knowledge, which overrides equal clauses.
    /// Answered like [`Model::Relevant`] without materializing all rules.
    Direct {
        counter: SubsetCounter,
        knowledge: KnowledgeBase,
    },
}

impl Model {
    pub fn train(ds: &Dataset, method: Method, max_arity: MaxArity) -> Result<Model, ModelError> {
        Ok(match method {
            Method::Tree => Model::Full(kb_from_tree(&build_id3(ds)?, PathMode::Leaves)?),
            Method::TreeAll => Model::Full(kb_from_tree(&build_id3(ds)?, PathMode::AllNodes)?),
            Method::Direct => Model::Direct {
                counter: SubsetCounter::build(ds, max_arity)?,
                knowledge: KnowledgeBase::new(),
            },
        })
    }

    /// Adds supplied clauses; see [`merge`].
    pub fn with_knowledge(self, extra: &[WeightedClause]) -> Result<Model, ModelError> {
        Ok(match self {
            Model::Full(kb) => Model::Full(merge(&kb, extra)?),
            Model::Relevant(kb) => Model::Relevant(merge(&kb, extra)?),
            Model::Direct { counter, knowledge } => Model::Direct {
                counter,
                knowledge: merge(&knowledge, extra)?,
            },
        })
    }

    /// The knowledge base a query is answered against.
    pub fn kb_for(&self, query: &Query) -> Result<KnowledgeBase, ModelError> {
        Ok(match self {
            Model::Full(kb) => kb.clone(),
            Model::Relevant(kb) => relevant_kb(query, kb),
            Model::Direct { counter, knowledge } => {
                let learned = counter.relevant_kb(query)?;
                let extra: Vec<WeightedClause> = relevant_kb(query, knowledge).iter().cloned().collect();
                merge(&learned, &extra)?
            }
        })
    }

    /// The whole knowledge base; for a direct model this materializes every
    /// counted rule.
    pub fn full_kb(&self) -> Result<KnowledgeBase, ModelError> {
        Ok(match self {
            Model::Full(kb) | Model::Relevant(kb) => kb.clone(),
            Model::Direct { counter, knowledge } => {
                let extra: Vec<WeightedClause> = knowledge.iter().cloned().collect();
                merge(&counter.to_kb()?, &extra)?
            }
        })
    }

    pub fn classify(&self, query: &Query, domains: &Domains) -> Result<InferenceResult, ModelError> {
        Ok(infer_pos(&self.kb_for(query)?, query, domains)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::parse_kb;

    fn example_strings() -> Dataset {
        Dataset::from_strings(&[
            ("0000", true),
            ("1111", true),
            ("1010", true),
            ("1100", true),
            ("0010", false),
            ("0100", false),
            ("1110", false),
            ("1000", false),
        ])
        .unwrap()
    }

    #[test]
    fn direct_matches_relevant_and_full() {
        let ds = example_strings();
        let domains = ds.domains();
        let direct = Model::train(&ds, Method::Direct, MaxArity::Unbounded).unwrap();
        let full_kb = direct.full_kb().unwrap();
        let relevant = Model::Relevant(full_kb.clone());
        let full = Model::Full(full_kb);
        for bits in 0..16u32 {
            let query = Query::from_pairs((0..4).map(|i| (format!("a{}", i + 1), ((bits >> i) & 1).to_string()))).unwrap();
            let a = direct.classify(&query, &domains).unwrap();
            let b = relevant.classify(&query, &domains).unwrap();
            let c = full.classify(&query, &domains).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.label, c.label, "query {query}");
            assert!((a.p_avg - c.p_avg).abs() < 1e-6, "query {query}: {} vs {}", a.p_avg, c.p_avg);
        }
    }

    #[test]
    fn knowledge_overrides_counts() {
        let ds = example_strings();
        let extra = parse_kb("0.9 pos | !a1=0").unwrap();
        let extra: Vec<WeightedClause> = extra.iter().cloned().collect();
        let model = Model::train(&ds, Method::Direct, MaxArity::Unbounded)
            .unwrap()
            .with_knowledge(&extra)
            .unwrap();
        let kb = model.kb_for(&"a1=0,a2=1".parse().unwrap()).unwrap();
        assert_eq!(kb.probability_of(&extra[0].clause), Some(0.9));
        assert_eq!(kb.len(), 3);
        // knowledge outside the query stays out
        assert_eq!(model.kb_for(&"a2=1".parse().unwrap()).unwrap().len(), 1);
    }

    #[test]
    fn method_names() {
        for m in [Method::Tree, Method::TreeAll, Method::Direct] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("forest".parse::<Method>().is_err());
    }
}
