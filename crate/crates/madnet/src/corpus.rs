//! Conversation data model, JSONL ingestion, vocabulary, tokenization,
//! synthetic corpus generation, and addressee-label masking.
//!
//! A conversation is an ordered list of context utterances plus a response
//! slot. Each utterance has a speaker (indexed by order of first speaking)
//! and an optional `reply_to` pointing at an earlier utterance; a missing
//! `reply_to` is a missing addressee label. The response's speaker and reply
//! target are always known; its text is the generation target.

use std::collections::BTreeMap;
use std::io::BufRead;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Validation { line: usize, msg: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Gold (or silver) addressee labels: instance id -> utterance index -> the
/// replied-to utterance index.
pub type LabelMap = BTreeMap<String, BTreeMap<usize, usize>>;

// ---------------------------------------------------------------------------
// Text-level instances (what the JSONL files contain)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedUtterance {
    pub speaker: usize,
    pub reply_to: Option<usize>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedInstance {
    pub id: String,
    /// Interlocutor names, indexed by order of first speaking.
    pub speakers: Vec<String>,
    pub utterances: Vec<ParsedUtterance>,
    pub response: ParsedUtterance,
}

impl ParsedInstance {
    pub fn m(&self) -> usize {
        self.utterances.len()
    }

    pub fn n_interlocutors(&self) -> usize {
        self.speakers.len()
    }
}

// ---------------------------------------------------------------------------
// Token-level instances (what the model consumes)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub speaker: usize,
    pub reply_to: Option<usize>,
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcInstance {
    pub id: String,
    pub utterances: Vec<Utterance>,
    pub response: Utterance,
    pub n_interlocutors: usize,
}

impl MpcInstance {
    pub fn m(&self) -> usize {
        self.utterances.len()
    }

    pub fn from_parsed(
        parsed: &ParsedInstance,
        vocab: &Vocab,
        max_utt_len: usize,
    ) -> Result<MpcInstance, CorpusError> {
        let utterances = parsed
            .utterances
            .iter()
            .map(|u| Utterance {
                speaker: u.speaker,
                reply_to: u.reply_to,
                tokens: tokenize(&u.text, vocab, max_utt_len),
            })
            .collect();
        let response = Utterance {
            speaker: parsed.response.speaker,
            reply_to: parsed.response.reply_to,
            tokens: tokenize(&parsed.response.text, vocab, max_utt_len),
        };
        let inst = MpcInstance {
            id: parsed.id.clone(),
            utterances,
            response,
            n_interlocutors: parsed.n_interlocutors(),
        };
        inst.validate()?;
        Ok(inst)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let err = |msg: String| CorpusError::Validation { line: 0, msg };
        if self.utterances.is_empty() {
            return Err(err(format!("instance {}: empty utterance list", self.id)));
        }
        for (i, u) in self.utterances.iter().enumerate() {
            if let Some(j) = u.reply_to {
                if j >= i {
                    return Err(err(format!(
                        "instance {}: utterance {i} replies to {j} (must be earlier)",
                        self.id
                    )));
                }
            }
            if u.tokens.is_empty() {
                return Err(err(format!("instance {}: utterance {i} has no tokens", self.id)));
            }
            if u.speaker >= self.n_interlocutors {
                return Err(err(format!("instance {}: bad speaker index", self.id)));
            }
        }
        match self.response.reply_to {
            None => {
                return Err(err(format!("instance {}: response lacks reply_to", self.id)));
            }
            Some(j) if j >= self.m() => {
                return Err(err(format!(
                    "instance {}: response replies to {j} but M = {}",
                    self.id,
                    self.m()
                )));
            }
            _ => {}
        }
        if self.response.speaker >= self.n_interlocutors {
            return Err(err(format!("instance {}: bad response speaker index", self.id)));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// JSONL parsing
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct JsonInstance {
    id: String,
    utterances: Vec<JsonUtterance>,
    response: JsonUtterance,
}

#[derive(Serialize, Deserialize)]
struct JsonUtterance {
    speaker: String,
    #[serde(default)]
    reply_to: Option<ReplyField>,
    text: String,
}

/// `reply_to` is normally an utterance index or null. As an ingestion
/// convenience for "@name"-style logs, a speaker name is also accepted and
/// resolved to that interlocutor's most recent preceding utterance.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ReplyField {
    Index(i64),
    Name(String),
}

/// Parses a JSON-Lines corpus. Blank lines and `{"_meta": ...}` header
/// objects are skipped; every other line must be one conversation object.
pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<ParsedInstance>, CorpusError> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(trimmed).map_err(|e| CorpusError::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
        if value.get("_meta").is_some() {
            continue;
        }
        let raw: JsonInstance = serde_json::from_value(value).map_err(|e| CorpusError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        out.push(parse_instance(raw, lineno)?);
    }
    if out.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(out)
}

pub fn parse_corpus_str(s: &str) -> Result<Vec<ParsedInstance>, CorpusError> {
    parse_corpus(s.as_bytes())
}

fn parse_instance(raw: JsonInstance, lineno: usize) -> Result<ParsedInstance, CorpusError> {
    let verr = |msg: String| CorpusError::Validation { line: lineno, msg };
    if raw.utterances.is_empty() {
        return Err(verr(format!("instance {}: empty utterance list", raw.id)));
    }

    let mut speakers: Vec<String> = Vec::new();
    let mut speaker_index = |name: &str| -> usize {
        match speakers.iter().position(|s| s == name) {
            Some(i) => i,
            None => {
                speakers.push(name.to_string());
                speakers.len() - 1
            }
        }
    };

    let mut utterances = Vec::with_capacity(raw.utterances.len());
    for (i, u) in raw.utterances.iter().enumerate() {
        let speaker = speaker_index(&u.speaker);
        let reply_to = resolve_reply(&u.reply_to, i, &raw.utterances, &raw.id, lineno)?;
        utterances.push(ParsedUtterance {
            speaker,
            reply_to,
            text: u.text.clone(),
        });
    }

    let m = raw.utterances.len();
    let response_speaker = speaker_index(&raw.response.speaker);
    let response_reply = resolve_reply(&raw.response.reply_to, m, &raw.utterances, &raw.id, lineno)?;
    if response_reply.is_none() {
        return Err(verr(format!("instance {}: response must carry reply_to", raw.id)));
    }

    Ok(ParsedInstance {
        id: raw.id,
        speakers,
        utterances,
        response: ParsedUtterance {
            speaker: response_speaker,
            reply_to: response_reply,
            text: raw.response.text.clone(),
        },
    })
}

fn resolve_reply(
    field: &Option<ReplyField>,
    own_index: usize,
    utterances: &[JsonUtterance],
    id: &str,
    lineno: usize,
) -> Result<Option<usize>, CorpusError> {
    let verr = |msg: String| CorpusError::Validation { line: lineno, msg };
    match field {
        None => Ok(None),
        Some(ReplyField::Index(j)) => {
            if *j < 0 || *j as usize >= own_index {
                return Err(verr(format!(
                    "instance {id}: utterance {own_index} replies to {j} (must name an earlier utterance)"
                )));
            }
            Ok(Some(*j as usize))
        }
        // "@name" convention: the mention resolves to the most recent
        // preceding utterance by that interlocutor.
        Some(ReplyField::Name(name)) => {
            let target = utterances[..own_index]
                .iter()
                .rposition(|u| &u.speaker == name);
            match target {
                Some(j) => Ok(Some(j)),
                None => Err(verr(format!(
                    "instance {id}: utterance {own_index} mentions {name:?} who has no earlier utterance"
                ))),
            }
        }
    }
}

/// Serializes instances back to JSON Lines (indices only, never names).
pub fn to_jsonl(corpus: &[ParsedInstance]) -> String {
    let mut out = String::new();
    for inst in corpus {
        let raw = JsonInstance {
            id: inst.id.clone(),
            utterances: inst
                .utterances
                .iter()
                .map(|u| JsonUtterance {
                    speaker: inst.speakers[u.speaker].clone(),
                    reply_to: u.reply_to.map(|j| ReplyField::Index(j as i64)),
                    text: u.text.clone(),
                })
                .collect(),
            response: JsonUtterance {
                speaker: inst.speakers[inst.response.speaker].clone(),
                reply_to: inst.response.reply_to.map(|j| ReplyField::Index(j as i64)),
                text: inst.response.text.clone(),
            },
        };
        out.push_str(&serde_json::to_string(&raw).expect("corpus serialization"));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const MASK: u32 = 4;

const RESERVED: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<unk>", "<mask>"];

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocab {
    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.token_to_id).expect("vocab serialization")
    }

    pub fn from_json(s: &str) -> Result<Vocab, CorpusError> {
        let token_to_id: BTreeMap<String, u32> =
            serde_json::from_str(s).map_err(|e| CorpusError::Parse {
                line: 0,
                msg: format!("vocab: {e}"),
            })?;
        let n = token_to_id.len();
        if n < RESERVED.len() {
            return Err(CorpusError::Config("vocab smaller than reserved set".into()));
        }
        let mut id_to_token = vec![String::new(); n];
        for (tok, &id) in &token_to_id {
            if id as usize >= n || !id_to_token[id as usize].is_empty() {
                return Err(CorpusError::Config(format!(
                    "vocab ids must be a bijection onto 0..{n}; problem at {tok:?}"
                )));
            }
            id_to_token[id as usize] = tok.clone();
        }
        for (i, name) in RESERVED.iter().enumerate() {
            if id_to_token[i] != *name {
                return Err(CorpusError::Config(format!(
                    "vocab id {i} must be {name:?}, found {:?}",
                    id_to_token[i]
                )));
            }
        }
        Ok(Vocab {
            token_to_id,
            id_to_token,
        })
    }
}

/// Builds a vocabulary from text: lowercased whitespace tokens that occur at
/// least `min_freq` times, assigned ids by (frequency desc, token asc) after
/// the five reserved ids.
pub fn build_vocab<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    min_freq: usize,
) -> Result<Vocab, CorpusError> {
    if min_freq == 0 {
        return Err(CorpusError::Config("min_freq must be >= 1".into()));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut saw_text = false;
    for text in texts {
        saw_text = true;
        for tok in text.to_lowercase().split_whitespace() {
            if RESERVED.contains(&tok) {
                continue;
            }
            *counts.entry(tok.to_string()).or_insert(0) += 1;
        }
    }
    if !saw_text {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_freq)
        .collect();
    kept.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));

    let mut token_to_id = BTreeMap::new();
    let mut id_to_token = Vec::with_capacity(RESERVED.len() + kept.len());
    for (i, name) in RESERVED.iter().enumerate() {
        token_to_id.insert(name.to_string(), i as u32);
        id_to_token.push(name.to_string());
    }
    for (tok, _) in kept {
        let id = id_to_token.len() as u32;
        token_to_id.insert(tok.clone(), id);
        id_to_token.push(tok);
    }
    Ok(Vocab {
        token_to_id,
        id_to_token,
    })
}

/// Every text in a corpus (utterances then the response, per instance);
/// the usual input to [`build_vocab`].
pub fn corpus_texts(corpus: &[ParsedInstance]) -> impl Iterator<Item = &str> {
    corpus.iter().flat_map(|inst| {
        inst.utterances
            .iter()
            .map(|u| u.text.as_str())
            .chain(std::iter::once(inst.response.text.as_str()))
    })
}

/// Lowercase whitespace tokenization with UNK for out-of-vocabulary words,
/// truncated to `max_utt_len`. Empty text yields a single UNK.
pub fn tokenize(text: &str, vocab: &Vocab, max_utt_len: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = text
        .to_lowercase()
        .split_whitespace()
        .take(max_utt_len)
        .map(|tok| vocab.id(tok).unwrap_or(UNK))
        .collect();
    if ids.is_empty() {
        ids.push(UNK);
    }
    ids
}

// ---------------------------------------------------------------------------
// Synthetic keyword-copy corpus
// ---------------------------------------------------------------------------

/// Geometric recency skew for sampled reply targets: candidate `j` for
/// utterance `i` is weighted `RECENCY_DECAY^(i-1-j)`, so recent utterances
/// are replied to more often (as in real chat logs), and the
/// preceding-utterance heuristic is a stronger baseline than random choice.
const RECENCY_DECAY: f64 = 0.7;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthConfig {
    pub n_instances: usize,
    pub m_utterances: usize,
    pub n_interlocutors: usize,
    pub vocab_size: usize,
    pub seed: u64,
    /// Fraction of instances (the tail of the list) whose last-utterance
    /// addressee label is withheld into the gold sidecar.
    #[serde(default)]
    pub masked_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_instances: 2000,
            m_utterances: 5,
            n_interlocutors: 3,
            vocab_size: 50,
            seed: 7,
            masked_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synthesized {
    pub instances: Vec<ParsedInstance>,
    /// True labels for the masked entries.
    pub gold: LabelMap,
    /// Index of the first masked ("held-out") instance.
    pub heldout_start: usize,
}

/// Generates conversations with a known reply tree and a keyword-copy
/// response: every utterance leads with a unique keyword, and the response
/// to utterance `M-1` quotes both that utterance's keyword and the keyword
/// of the utterance it replied to. The reply target of the last utterance is
/// therefore statistically identifiable from the response text alone.
pub fn synthesize_corpus(cfg: &SynthConfig) -> Result<Synthesized, CorpusError> {
    let m = cfg.m_utterances;
    let i_count = cfg.n_interlocutors;
    if cfg.n_instances == 0 {
        return Err(CorpusError::Config("n_instances must be >= 1".into()));
    }
    if m < 2 {
        return Err(CorpusError::Config("m_utterances must be >= 2".into()));
    }
    if i_count < 2 {
        return Err(CorpusError::Config("n_interlocutors must be >= 2".into()));
    }
    if i_count > m {
        return Err(CorpusError::Config(
            "n_interlocutors must not exceed m_utterances".into(),
        ));
    }
    if cfg.vocab_size < 20 {
        return Err(CorpusError::Config("vocab_size must be >= 20".into()));
    }
    if !(0.0..=1.0).contains(&cfg.masked_fraction) {
        return Err(CorpusError::Config("masked_fraction must be in [0, 1]".into()));
    }
    let n_kw = cfg.vocab_size * 3 / 5;
    let n_filler = cfg.vocab_size - n_kw - 2;
    if n_kw <= m {
        return Err(CorpusError::Config(format!(
            "vocab_size {} leaves only {n_kw} keywords for {m} utterances",
            cfg.vocab_size
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let kw = |k: usize| format!("k{k:02}");
    let filler = |f: usize| format!("w{f:02}");

    let mut instances = Vec::with_capacity(cfg.n_instances);
    let mut truth: Vec<usize> = Vec::with_capacity(cfg.n_instances);
    for idx in 0..cfg.n_instances {
        // speakers: first appearances in order, then free choice
        let speakers: Vec<usize> = (0..m)
            .map(|u| if u < i_count { u } else { rng.random_range(0..i_count) })
            .collect();

        // reply tree with recency skew
        let reply_to: Vec<Option<usize>> = (0..m)
            .map(|u| {
                if u == 0 {
                    return None;
                }
                let weights: Vec<f64> =
                    (0..u).map(|j| RECENCY_DECAY.powi((u - 1 - j) as i32)).collect();
                Some(weighted_choice(&weights, &mut rng))
            })
            .collect();

        // one distinct keyword per utterance
        let mut pool: Vec<usize> = (0..n_kw).collect();
        for slot in 0..m {
            let pick = rng.random_range(slot..n_kw);
            pool.swap(slot, pick);
        }
        let keywords = &pool[..m];

        let utterances: Vec<ParsedUtterance> = (0..m)
            .map(|u| {
                let f1 = rng.random_range(0..n_filler);
                let f2 = rng.random_range(0..n_filler);
                ParsedUtterance {
                    speaker: speakers[u],
                    reply_to: reply_to[u],
                    text: format!("{} {} {}", kw(keywords[u]), filler(f1), filler(f2)),
                }
            })
            .collect();

        let last_target = reply_to[m - 1].expect("m >= 2");
        let response = ParsedUtterance {
            speaker: rng.random_range(0..i_count),
            reply_to: Some(m - 1),
            text: format!("re {} echo {}", kw(keywords[m - 1]), kw(keywords[last_target])),
        };

        truth.push(last_target);
        instances.push(ParsedInstance {
            id: format!("synth-{idx:05}"),
            speakers: (0..i_count).map(|s| format!("u{s}")).collect(),
            utterances,
            response,
        });
    }

    // withhold the last-utterance label on the tail fraction
    let masked = (cfg.masked_fraction * cfg.n_instances as f64).round() as usize;
    let heldout_start = cfg.n_instances - masked;
    let mut gold = LabelMap::new();
    for (idx, inst) in instances.iter_mut().enumerate().skip(heldout_start) {
        inst.utterances[m - 1].reply_to = None;
        gold.entry(inst.id.clone())
            .or_default()
            .insert(m - 1, truth[idx]);
    }

    Ok(Synthesized {
        instances,
        gold,
        heldout_start,
    })
}

fn weighted_choice(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        x -= w;
        if x <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

// ---------------------------------------------------------------------------
// Masking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskWhich {
    /// The last context utterance of every instance.
    Last,
    /// A uniformly chosen fraction of all labeled non-first utterances
    /// (exactly `round(p * n)` of them).
    Fraction(f64),
}

/// Removes selected `reply_to` labels, returning the masked corpus and a
/// gold map holding the originals. Utterance 0 is never selected.
pub fn mask_addressees(
    corpus: &[ParsedInstance],
    which: MaskWhich,
    seed: u64,
) -> Result<(Vec<ParsedInstance>, LabelMap), CorpusError> {
    let mut out = corpus.to_vec();
    let mut gold = LabelMap::new();
    let mask = |inst: &mut ParsedInstance, utt: usize, gold: &mut LabelMap| {
        if let Some(j) = inst.utterances[utt].reply_to.take() {
            gold.entry(inst.id.clone()).or_default().insert(utt, j);
        }
    };
    match which {
        MaskWhich::Last => {
            for inst in out.iter_mut() {
                let last = inst.m() - 1;
                if last >= 1 {
                    mask(inst, last, &mut gold);
                }
            }
        }
        MaskWhich::Fraction(p) => {
            if !(0.0..=1.0).contains(&p) {
                return Err(CorpusError::Config(format!("mask fraction {p} outside [0, 1]")));
            }
            let mut eligible: Vec<(usize, usize)> = Vec::new();
            for (ii, inst) in out.iter().enumerate() {
                for (ui, u) in inst.utterances.iter().enumerate() {
                    if ui >= 1 && u.reply_to.is_some() {
                        eligible.push((ii, ui));
                    }
                }
            }
            let k = (p * eligible.len() as f64).round() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for slot in 0..k.min(eligible.len()) {
                let pick = rng.random_range(slot..eligible.len());
                eligible.swap(slot, pick);
                let (ii, ui) = eligible[slot];
                let inst = &mut out[ii];
                mask(inst, ui, &mut gold);
            }
        }
    }
    Ok((out, gold))
}

/// Writes labels back into a corpus (restoring gold after masking, or
/// materializing silver labels).
pub fn apply_labels(corpus: &[ParsedInstance], labels: &LabelMap) -> Vec<ParsedInstance> {
    let mut out = corpus.to_vec();
    for inst in out.iter_mut() {
        if let Some(per_utt) = labels.get(&inst.id) {
            for (&utt, &j) in per_utt {
                if utt < inst.utterances.len() {
                    inst.utterances[utt].reply_to = Some(j);
                }
            }
        }
    }
    out
}

/// Fraction of non-first context utterances lacking an addressee label.
pub fn missing_label_rate(corpus: &[ParsedInstance]) -> Result<f64, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut eligible = 0usize;
    let mut missing = 0usize;
    for inst in corpus {
        for (i, u) in inst.utterances.iter().enumerate() {
            if i >= 1 {
                eligible += 1;
                if u.reply_to.is_none() {
                    missing += 1;
                }
            }
        }
    }
    if eligible == 0 {
        return Ok(0.0);
    }
    Ok(missing as f64 / eligible as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_utterance_line() -> &'static str {
        r#"{"id": "c1", "utterances": [
            {"speaker": "a", "reply_to": null, "text": "hello there"},
            {"speaker": "b", "reply_to": 0, "text": "hi a"},
            {"speaker": "c", "reply_to": null, "text": "what is up"},
            {"speaker": "a", "reply_to": 1, "text": "not much"},
            {"speaker": "b", "reply_to": 3, "text": "same here"}
        ], "response": {"speaker": "c", "reply_to": 3, "text": "ok then"}}"#
    }

    #[test]
    fn parse_maps_speakers_in_order() {
        let line = five_utterance_line().replace('\n', " ");
        let corpus = parse_corpus_str(&line).unwrap();
        assert_eq!(corpus.len(), 1);
        let inst = &corpus[0];
        assert_eq!(inst.m(), 5);
        assert_eq!(inst.n_interlocutors(), 3);
        assert_eq!(inst.speakers, vec!["a", "b", "c"]);
        assert_eq!(inst.response.reply_to, Some(3));
        assert_eq!(inst.utterances[2].reply_to, None);
        assert_eq!(inst.utterances[1].speaker, 1);
    }

    #[test]
    fn reply_to_beyond_own_index_rejected() {
        let line = r#"{"id": "bad", "utterances": [
            {"speaker": "a", "reply_to": null, "text": "x"},
            {"speaker": "b", "reply_to": null, "text": "y"},
            {"speaker": "a", "reply_to": null, "text": "z"},
            {"speaker": "b", "reply_to": null, "text": "w"},
            {"speaker": "a", "reply_to": 7, "text": "v"}
        ], "response": {"speaker": "b", "reply_to": 0, "text": "r"}}"#
            .replace('\n', " ");
        let err = parse_corpus_str(&line).unwrap_err();
        assert!(matches!(err, CorpusError::Validation { .. }), "{err}");
    }

    #[test]
    fn malformed_json_reports_line() {
        let text = format!("{}\n{{oops\n", five_utterance_line().replace('\n', " "));
        let err = parse_corpus_str(&text).unwrap_err();
        match err {
            CorpusError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn at_name_resolves_to_most_recent_prior_utterance() {
        let line = r#"{"id": "m", "utterances": [
            {"speaker": "a", "reply_to": null, "text": "one"},
            {"speaker": "b", "reply_to": null, "text": "two"},
            {"speaker": "a", "reply_to": null, "text": "three"},
            {"speaker": "c", "reply_to": "a", "text": "four"}
        ], "response": {"speaker": "b", "reply_to": 3, "text": "r"}}"#
            .replace('\n', " ");
        let corpus = parse_corpus_str(&line).unwrap();
        assert_eq!(corpus[0].utterances[3].reply_to, Some(2));
    }

    #[test]
    fn jsonl_round_trip_is_semantically_identical() {
        let synth = synthesize_corpus(&SynthConfig {
            n_instances: 25,
            masked_fraction: 0.2,
            ..SynthConfig::default()
        })
        .unwrap();
        let text = to_jsonl(&synth.instances);
        let reparsed = parse_corpus_str(&text).unwrap();
        assert_eq!(reparsed, synth.instances);
    }

    #[test]
    fn vocab_ordering_by_frequency_then_lexicographic() {
        let vocab = build_vocab(["a a b"], 1).unwrap();
        let ida = vocab.id("a").unwrap();
        let idb = vocab.id("b").unwrap();
        assert!(ida < idb);
        assert_eq!(ida, 5);
        assert_eq!(vocab.size(), 7);
    }

    #[test]
    fn vocab_min_freq_threshold() {
        let vocab = build_vocab(["a a b"], 2).unwrap();
        assert!(vocab.id("a").is_some());
        assert!(vocab.id("b").is_none());
        assert_eq!(tokenize("b", &vocab, 50), vec![UNK]);
    }

    #[test]
    fn vocab_build_is_deterministic() {
        let v1 = build_vocab(["x y z z", "y y w"], 1).unwrap();
        let v2 = build_vocab(["x y z z", "y y w"], 1).unwrap();
        assert_eq!(v1.to_json(), v2.to_json());
    }

    #[test]
    fn vocab_json_round_trip() {
        let v = build_vocab(["alpha beta beta gamma"], 1).unwrap();
        let loaded = Vocab::from_json(&v.to_json()).unwrap();
        assert_eq!(loaded, v);
    }

    #[test]
    fn tokenize_truncates_to_max_len() {
        let words: Vec<String> = (0..60).map(|i| format!("t{i}")).collect();
        let text = words.join(" ");
        let vocab = build_vocab([text.as_str()], 1).unwrap();
        assert_eq!(tokenize(&text, &vocab, 50).len(), 50);
    }

    #[test]
    fn tokenize_degenerate_inputs() {
        let vocab = build_vocab(["hello"], 1).unwrap();
        assert_eq!(tokenize("", &vocab, 50), vec![UNK]);
        assert_eq!(tokenize("xyzzy", &vocab, 50), vec![UNK]);
    }

    #[test]
    fn synthesis_is_pure_in_its_config() {
        let cfg = SynthConfig {
            n_instances: 100,
            m_utterances: 5,
            n_interlocutors: 3,
            vocab_size: 50,
            seed: 7,
            masked_fraction: 0.25,
        };
        let a = synthesize_corpus(&cfg).unwrap();
        let b = synthesize_corpus(&cfg).unwrap();
        assert_eq!(to_jsonl(&a.instances), to_jsonl(&b.instances));
        assert_eq!(a.gold, b.gold);
        assert_eq!(a.heldout_start, 75);
    }

    #[test]
    fn response_quotes_reply_target_keyword() {
        let synth = synthesize_corpus(&SynthConfig {
            n_instances: 40,
            masked_fraction: 0.5,
            ..SynthConfig::default()
        })
        .unwrap();
        for (idx, inst) in synth.instances.iter().enumerate() {
            let last = inst.m() - 1;
            let target = inst.utterances[last]
                .reply_to
                .or_else(|| synth.gold.get(&inst.id).and_then(|g| g.get(&last).copied()))
                .unwrap();
            let target_kw = inst.utterances[target].text.split_whitespace().next().unwrap();
            assert!(
                inst.response.text.split_whitespace().any(|t| t == target_kw),
                "instance {idx}: response {:?} missing keyword {target_kw:?}",
                inst.response.text
            );
        }
    }

    #[test]
    fn gold_sidecar_matches_generation() {
        let cfg = SynthConfig {
            n_instances: 50,
            masked_fraction: 1.0,
            ..SynthConfig::default()
        };
        let masked = synthesize_corpus(&cfg).unwrap();
        let full = synthesize_corpus(&SynthConfig {
            masked_fraction: 0.0,
            ..cfg
        })
        .unwrap();
        assert_eq!(masked.heldout_start, 0);
        for (m_inst, f_inst) in masked.instances.iter().zip(&full.instances) {
            let last = m_inst.m() - 1;
            assert_eq!(m_inst.utterances[last].reply_to, None);
            assert_eq!(
                masked.gold[&m_inst.id][&last],
                f_inst.utterances[last].reply_to.unwrap()
            );
        }
    }

    #[test]
    fn mask_last_takes_final_utterance() {
        let synth = synthesize_corpus(&SynthConfig {
            n_instances: 4,
            masked_fraction: 0.0,
            ..SynthConfig::default()
        })
        .unwrap();
        let (masked, gold) = mask_addressees(&synth.instances, MaskWhich::Last, 0).unwrap();
        for (orig, m) in synth.instances.iter().zip(&masked) {
            assert_eq!(m.utterances[4].reply_to, None);
            assert_eq!(gold[&m.id][&4], orig.utterances[4].reply_to.unwrap());
        }
    }

    #[test]
    fn mask_fraction_zero_is_identity() {
        let synth = synthesize_corpus(&SynthConfig {
            n_instances: 4,
            masked_fraction: 0.0,
            ..SynthConfig::default()
        })
        .unwrap();
        let (masked, gold) = mask_addressees(&synth.instances, MaskWhich::Fraction(0.0), 1).unwrap();
        assert_eq!(masked, synth.instances);
        assert!(gold.is_empty());
    }

    #[test]
    fn mask_fraction_rounds_count() {
        // one instance, 5 labeled non-first utterances; p = 0.4 -> 2 masked
        let mut synth = synthesize_corpus(&SynthConfig {
            n_instances: 1,
            m_utterances: 6,
            masked_fraction: 0.0,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(
            synth.instances[0]
                .utterances
                .iter()
                .skip(1)
                .filter(|u| u.reply_to.is_some())
                .count(),
            5
        );
        let (masked, gold) =
            mask_addressees(&synth.instances, MaskWhich::Fraction(0.4), 9).unwrap();
        let total_masked: usize = gold.values().map(|g| g.len()).sum();
        assert_eq!(total_masked, 2);
        // restoring from gold reproduces the original
        let restored = apply_labels(&masked, &gold);
        assert_eq!(restored, std::mem::take(&mut synth.instances));
    }

    #[test]
    fn mask_fraction_rejects_out_of_range() {
        let synth = synthesize_corpus(&SynthConfig {
            n_instances: 2,
            masked_fraction: 0.0,
            ..SynthConfig::default()
        })
        .unwrap();
        assert!(mask_addressees(&synth.instances, MaskWhich::Fraction(1.5), 0).is_err());
    }

    #[test]
    fn missing_rate_two_of_five() {
        // one instance, six utterances: five eligible labels, two absent
        let mut synth = synthesize_corpus(&SynthConfig {
            n_instances: 1,
            m_utterances: 6,
            masked_fraction: 0.0,
            ..SynthConfig::default()
        })
        .unwrap();
        synth.instances[0].utterances[2].reply_to = None;
        synth.instances[0].utterances[5].reply_to = None;
        assert!((missing_label_rate(&synth.instances).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn missing_rate_counts() {
        let synth = synthesize_corpus(&SynthConfig {
            n_instances: 10,
            masked_fraction: 0.0,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(missing_label_rate(&synth.instances).unwrap(), 0.0);
        let (masked, _) = mask_addressees(&synth.instances, MaskWhich::Fraction(1.0), 3).unwrap();
        assert_eq!(missing_label_rate(&masked).unwrap(), 1.0);
        let (last_masked, _) = mask_addressees(&synth.instances, MaskWhich::Last, 3).unwrap();
        // one of four eligible labels per instance masked
        assert!((missing_label_rate(&last_masked).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn tokenized_instance_validates() {
        let line = five_utterance_line().replace('\n', " ");
        let corpus = parse_corpus_str(&line).unwrap();
        let vocab = build_vocab(corpus.iter().flat_map(|i| {
            i.utterances
                .iter()
                .map(|u| u.text.as_str())
                .chain(std::iter::once(i.response.text.as_str()))
        }), 1)
        .unwrap();
        let inst = MpcInstance::from_parsed(&corpus[0], &vocab, 50).unwrap();
        assert_eq!(inst.m(), 5);
        assert_eq!(inst.n_interlocutors, 3);
        assert_eq!(inst.response.reply_to, Some(3));
        assert!(inst.utterances.iter().all(|u| !u.tokens.is_empty()));
    }
}
