//! Rule-based mapping from Universal Dependencies trees to scene graphs.
//!
//! A deliberately small rule set:
//!
//! * nouns and proper nouns become objects; `compound` and `flat`
//!   dependents are merged into the head's name;
//! * `amod` dependents become attributes of their noun;
//! * a copular predicate adjective (`the snowboard is blue`) becomes an
//!   attribute of the subject, a copular prepositional noun (`the cup is on
//!   the table`) a relation;
//! * a verb with a subject and a direct object yields
//!   `(subject, verb, object)`; a verb without a direct object yields the
//!   attribute `(subject, verb)`;
//! * oblique nouns of a verb and `nmod` nouns of a noun yield
//!   `(subject-or-noun, preposition, noun)`, with multiword prepositions
//!   (`in front of`) assembled from `fixed` dependents.
//!
//! The subject of a verb is its `nsubj` noun, the noun it modifies when
//! attached as `acl`, or the subject of the verb it is conjoined to.
//! Anything else produces no tuples.

use super::conllu::DependencyTree;
use super::SceneGraph;

pub fn graph_from_dependencies(tree: &DependencyTree) -> SceneGraph {
    let mut b = Builder {
        tree,
        graph: SceneGraph::default(),
        provenance: Vec::new(),
    };
    b.run();
    let Builder {
        mut graph,
        provenance,
        ..
    } = b;
    graph.provenance = Some(provenance);
    graph
}

struct Builder<'a> {
    tree: &'a DependencyTree,
    graph: SceneGraph,
    provenance: Vec<Vec<usize>>,
}

const MERGED: &[&str] = &["compound", "flat"];

impl Builder<'_> {
    fn run(&mut self) {
        let tokens = self.tree.tokens();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_nominal() && !MERGED.contains(&t.base_rel()) && t.base_rel() != "fixed" {
                self.object(i);
            }
        }
        for (i, t) in tokens.iter().enumerate() {
            if t.is_nominal() {
                self.noun_rules(i);
            }
            if self.tree.children_with(i, "cop").next().is_some() {
                self.copula_rules(i);
            } else if t.upos == "VERB" {
                self.verb_rules(i);
            }
        }
    }

    fn form(&self, i: usize) -> String {
        self.tree.tokens()[i].form.to_lowercase()
    }

    fn is_object(&self, i: usize) -> bool {
        let t = &self.tree.tokens()[i];
        t.is_nominal() && !MERGED.contains(&t.base_rel()) && t.base_rel() != "fixed"
    }

    /// Registers the object headed by `i` and returns its name.
    fn object(&mut self, i: usize) -> String {
        let mut parts: Vec<usize> = self
            .tree
            .children(i)
            .filter(|&c| MERGED.contains(&self.tree.tokens()[c].base_rel()))
            .collect();
        parts.push(i);
        parts.sort_unstable();
        let name = parts
            .iter()
            .map(|&p| self.form(p))
            .collect::<Vec<_>>()
            .join(" ");
        if !self.graph.objects.contains(&name) {
            self.graph.objects.push(name.clone());
            self.provenance.push(parts);
        }
        name
    }

    fn attribute(&mut self, object: String, attr: String) {
        let pair = (object, attr);
        if !self.graph.attributes.contains(&pair) {
            self.graph.attributes.push(pair);
        }
    }

    fn relation(&mut self, subject: String, rel: String, object: String) {
        let triple = (subject, rel, object);
        if !self.graph.relations.contains(&triple) {
            self.graph.relations.push(triple);
        }
    }

    /// Preposition text of noun `i`: its `case` dependents with their
    /// `fixed` continuations, in sentence order.
    fn preposition(&self, i: usize) -> Option<String> {
        let mut words: Vec<usize> = Vec::new();
        for c in self.tree.children_with(i, "case") {
            words.push(c);
            words.extend(self.tree.children_with(c, "fixed"));
        }
        if words.is_empty() {
            return None;
        }
        words.sort_unstable();
        Some(
            words
                .iter()
                .map(|&w| self.form(w))
                .collect::<Vec<_>>()
                .join(" "),
        )
    }

    fn subject_of(&self, verb: usize, depth: usize) -> Option<usize> {
        if let Some(s) = self
            .tree
            .children_with(verb, "nsubj")
            .find(|&s| self.is_object(s))
        {
            return Some(s);
        }
        let t = &self.tree.tokens()[verb];
        let head = t.head?;
        match t.base_rel() {
            "acl" if self.is_object(head) => Some(head),
            "conj" if depth < 8 => self.subject_of(head, depth + 1),
            _ => None,
        }
    }

    fn noun_rules(&mut self, noun: usize) {
        if !self.is_object(noun) {
            return;
        }
        let name = self.object(noun);
        let amods: Vec<usize> = self.tree.children_with(noun, "amod").collect();
        for a in amods {
            let attr = self.form(a);
            self.attribute(name.clone(), attr);
        }
        let nmods: Vec<usize> = self
            .tree
            .children(noun)
            .filter(|&c| self.tree.tokens()[c].deprel == "nmod" && self.is_object(c))
            .collect();
        for n in nmods {
            if let Some(prep) = self.preposition(n) {
                let other = self.object(n);
                self.relation(name.clone(), prep, other);
            }
        }
    }

    fn copula_rules(&mut self, pred: usize) {
        let Some(subj) = self
            .tree
            .children_with(pred, "nsubj")
            .find(|&s| self.is_object(s))
        else {
            return;
        };
        let subject = self.object(subj);
        let t = &self.tree.tokens()[pred];
        if t.upos == "ADJ" {
            let mut preds = vec![pred];
            preds.extend(
                self.tree
                    .children_with(pred, "conj")
                    .filter(|&c| self.tree.tokens()[c].upos == "ADJ"),
            );
            for p in preds {
                let attr = self.form(p);
                self.attribute(subject.clone(), attr);
            }
        } else if self.is_object(pred) {
            if let Some(prep) = self.preposition(pred) {
                let object = self.object(pred);
                self.relation(subject, prep, object);
            }
        }
    }

    fn verb_rules(&mut self, verb: usize) {
        let Some(subj) = self.subject_of(verb, 0) else {
            return;
        };
        let subject = self.object(subj);
        let verb_form = self.form(verb);
        let objects: Vec<usize> = self
            .tree
            .children(verb)
            .filter(|&c| {
                matches!(self.tree.tokens()[c].base_rel(), "obj" | "dobj") && self.is_object(c)
            })
            .collect();
        if objects.is_empty() {
            self.attribute(subject.clone(), verb_form.clone());
        }
        for o in objects {
            let object = self.object(o);
            self.relation(subject.clone(), verb_form.clone(), object);
        }
        let obliques: Vec<usize> = self
            .tree
            .children_with(verb, "obl")
            .filter(|&c| self.is_object(c))
            .collect();
        for o in obliques {
            if let Some(prep) = self.preposition(o) {
                let object = self.object(o);
                self.relation(subject.clone(), prep, object);
            }
        }
    }
}
