//! Reader for CoNLL-U dependency parses.
//!
//! Ten tab-separated columns per token, sentences separated by blank lines,
//! `#` comment lines ignored. Multiword-token ranges (`3-4`) and empty nodes
//! (`5.1`) are skipped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub form: String,
    pub lemma: String,
    pub upos: String,
    /// Zero-based index of the head token, `None` for the root.
    pub head: Option<usize>,
    pub deprel: String,
}

impl Token {
    pub fn is_nominal(&self) -> bool {
        matches!(self.upos.as_str(), "NOUN" | "PROPN")
    }

    /// Relation label without its subtype (`nsubj:pass` → `nsubj`).
    pub fn base_rel(&self) -> &str {
        self.deprel.split(':').next().unwrap_or("")
    }
}

/// A single-rooted, acyclic dependency tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyTree {
    tokens: Vec<Token>,
}

impl DependencyTree {
    /// Checks the tree shape; `first_line` is used to report the offending
    /// row.
    pub fn new(tokens: Vec<Token>, first_line: usize) -> Result<Self> {
        let n = tokens.len();
        let mut root = None;
        for (i, t) in tokens.iter().enumerate() {
            match t.head {
                None => {
                    if root.is_some() {
                        return Err(Error::parse(
                            first_line + i,
                            "sentence has more than one root",
                        ));
                    }
                    root = Some(i);
                }
                Some(h) if h >= n => {
                    return Err(Error::parse(
                        first_line + i,
                        format!("head {} is out of range", h + 1),
                    ));
                }
                Some(h) if h == i => {
                    return Err(Error::parse(first_line + i, "token is its own head"));
                }
                Some(_) => {}
            }
        }
        if n > 0 && root.is_none() {
            return Err(Error::parse(first_line, "sentence has no root"));
        }
        for start in 0..n {
            let mut steps = 0;
            let mut cur = tokens[start].head;
            while let Some(h) = cur {
                steps += 1;
                if steps > n {
                    return Err(Error::parse(first_line + start, "dependency cycle"));
                }
                cur = tokens[h].head;
            }
        }
        Ok(DependencyTree { tokens })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `(head, dependent, label)` for every non-root token, zero-based.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, &str)> + '_ {
        self.tokens
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.head.map(|h| (h, i, t.deprel.as_str())))
    }

    /// Dependents of `head` in sentence order.
    pub fn children(&self, head: usize) -> impl Iterator<Item = usize> + '_ {
        self.tokens
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.head == Some(head))
            .map(|(i, _)| i)
    }

    pub fn children_with<'a>(
        &'a self,
        head: usize,
        rel: &'a str,
    ) -> impl Iterator<Item = usize> + 'a {
        self.children(head)
            .filter(move |&c| self.tokens[c].base_rel() == rel)
    }
}

/// Parses every sentence in `text`.
pub fn parse_conllu(text: &str) -> Result<Vec<DependencyTree>> {
    let mut trees = Vec::new();
    let mut rows: Vec<(usize, Token)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut rows, &mut trees)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::parse(
                line_no,
                format!("expected 10 columns, found {}", cols.len()),
            ));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad token id `{}`", cols[0])))?;
        if id != rows.len() + 1 {
            return Err(Error::parse(
                line_no,
                format!("token id {id} is out of sequence"),
            ));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad head `{}`", cols[6])))?;
        let lemma = if cols[2] == "_" { cols[1] } else { cols[2] };
        rows.push((
            line_no,
            Token {
                form: cols[1].to_string(),
                lemma: lemma.to_string(),
                upos: cols[3].to_string(),
                head: head.checked_sub(1),
                deprel: cols[7].to_string(),
            },
        ));
    }
    flush(&mut rows, &mut trees)?;
    Ok(trees)
}

fn flush(rows: &mut Vec<(usize, Token)>, trees: &mut Vec<DependencyTree>) -> Result<()> {
    if rows.is_empty() {
        return Ok(());
    }
    let first_line = rows[0].0;
    let tokens = rows.drain(..).map(|(_, t)| t).collect();
    trees.push(DependencyTree::new(tokens, first_line)?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOGS_RUN: &str = "# text = dogs run\n1\tdogs\tdog\tNOUN\tNNS\t_\t2\tnsubj\t_\t_\n2\trun\trun\tVERB\tVBP\t_\t0\troot\t_\t_\n";

    #[test]
    fn empty_input_has_no_trees() {
        assert!(parse_conllu("").unwrap().is_empty());
        assert!(parse_conllu("\n\n# just a comment\n").unwrap().is_empty());
    }

    #[test]
    fn two_token_sentence() {
        let trees = parse_conllu(DOGS_RUN).unwrap();
        assert_eq!(trees.len(), 1);
        let edges: Vec<_> = trees[0].edges().collect();
        assert_eq!(edges, vec![(1, 0, "nsubj")]);
    }

    #[test]
    fn blank_lines_separate_sentences() {
        let text = format!("{DOGS_RUN}\n{DOGS_RUN}\n\n");
        assert_eq!(parse_conllu(&text).unwrap().len(), 2);
    }

    #[test]
    fn nine_columns_is_an_error() {
        let err = parse_conllu("1\tdogs\tdog\tNOUN\tNNS\t_\t0\troot\t_\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn multiple_roots_are_rejected() {
        let text = "1\ta\ta\tNOUN\t_\t_\t0\troot\t_\t_\n2\tb\tb\tNOUN\t_\t_\t0\troot\t_\t_\n";
        let err = parse_conllu(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn cycles_are_rejected() {
        let text = "1\ta\ta\tNOUN\t_\t_\t2\tdep\t_\t_\n2\tb\tb\tNOUN\t_\t_\t1\tdep\t_\t_\n3\tc\tc\tVERB\t_\t_\t0\troot\t_\t_\n";
        assert!(matches!(
            parse_conllu(text).unwrap_err(),
            Error::Parse { .. }
        ));
    }

    #[test]
    fn ranges_and_empty_nodes_are_skipped() {
        let text = "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n1\tdo\tdo\tAUX\t_\t_\t0\troot\t_\t_\n2\tn't\tnot\tPART\t_\t_\t1\tadvmod\t_\t_\n2.1\tx\tx\tX\t_\t_\t_\t_\t_\t_\n";
        let trees = parse_conllu(text).unwrap();
        assert_eq!(trees[0].len(), 2);
    }
}
