//! Closed-class word lists for the rule-based tagger.

pub const PRONOUNS: &[&str] = &[
    "i",
    "me",
    "my",
    "mine",
    "myself",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
    "he",
    "him",
    "his",
    "himself",
    "she",
    "her",
    "hers",
    "herself",
    "it",
    "its",
    "itself",
    "we",
    "us",
    "our",
    "ours",
    "ourselves",
    "they",
    "them",
    "their",
    "theirs",
    "themselves",
    "someone",
    "somebody",
    "something",
    "anyone",
    "anybody",
    "anything",
    "everyone",
    "everybody",
    "everything",
    "nobody",
    "nothing",
    "who",
    "whom",
    "whose",
    "what",
    "which",
];

/// Pronouns that stand in subject position.
pub const SUBJECT_PRONOUNS: &[&str] = &["he", "she", "they"];
/// Pronouns that stand in object position (`her` only when not possessive).
pub const OBJECT_PRONOUNS: &[&str] = &["him", "them", "her"];
pub const POSSESSIVE_PRONOUNS: &[&str] = &[
    "his", "its", "their", "theirs", "hers", "my", "your", "our", "mine", "yours", "ours",
];

pub const AUXILIARIES: &[&str] = &[
    "am", "is", "are", "was", "were", "be", "been", "being", "do", "does", "did", "has", "have", "had", "will",
    "would", "shall", "should", "can", "could", "may", "might", "must", "'s", "'re", "'m", "'ll", "'ve", "'d", "n't",
    "not", "wo", "ca",
];

pub const FUNCTION_WORDS: &[&str] = &[
    // determiners
    "a",
    "an",
    "the",
    "this",
    "that",
    "these",
    "those",
    "some",
    "any",
    "no",
    "every",
    "each",
    "all",
    "both",
    "another",
    "other",
    "such",
    "few",
    "many",
    "much",
    "more",
    "most",
    "several",
    // prepositions
    "about",
    "above",
    "across",
    "after",
    "against",
    "along",
    "among",
    "around",
    "as",
    "at",
    "before",
    "behind",
    "below",
    "beside",
    "between",
    "beyond",
    "by",
    "despite",
    "down",
    "during",
    "except",
    "for",
    "from",
    "in",
    "inside",
    "into",
    "like",
    "near",
    "of",
    "off",
    "on",
    "onto",
    "out",
    "outside",
    "over",
    "past",
    "per",
    "since",
    "through",
    "throughout",
    "till",
    "to",
    "toward",
    "towards",
    "under",
    "until",
    "up",
    "upon",
    "via",
    "with",
    "within",
    "without",
    // conjunctions
    "and",
    "or",
    "but",
    "nor",
    "so",
    "yet",
    "because",
    "although",
    "though",
    "if",
    "unless",
    "while",
    "whereas",
    "whether",
    "than",
    "when",
    "where",
    "why",
    "how",
    // adverbs and particles that behave like function words
    "also",
    "already",
    "again",
    "always",
    "never",
    "often",
    "still",
    "just",
    "only",
    "even",
    "very",
    "too",
    "then",
    "there",
    "here",
    "now",
    "today",
    "tomorrow",
    "tonight",
    "yesterday",
    "soon",
    "later",
    "maybe",
    "perhaps",
    "not",
    "yes",
    "no",
    "ok",
    "okay",
    "well",
    "please",
    "together",
    "back",
    "away",
    "instead",
    "ago",
    "else",
    "really",
    "quite",
];

/// Capitalized words that commonly open a sentence without being names.
pub const SENTENCE_OPENERS: &[&str] = &[
    "hi", "hello", "hey", "thanks", "thank", "bye", "sorry", "oh", "wow", "yeah", "dear",
];

pub const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "no", "every", "each", "my", "your", "his",
    "her", "its", "our", "their", "another",
];

pub const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "st", "jr", "sr", "prof", "vs", "etc", "e.g", "i.e", "approx",
];

/// Base forms of frequent verbs; inflected forms are recognized by suffix.
pub const VERB_BASES: &[&str] = &[
    "accept",
    "add",
    "agree",
    "allow",
    "answer",
    "apologize",
    "arrange",
    "arrive",
    "ask",
    "attend",
    "bake",
    "believe",
    "book",
    "borrow",
    "break",
    "bring",
    "buy",
    "call",
    "cancel",
    "change",
    "check",
    "choose",
    "clean",
    "close",
    "come",
    "complain",
    "confirm",
    "cook",
    "cost",
    "cry",
    "decide",
    "deliver",
    "discuss",
    "drink",
    "drive",
    "eat",
    "enjoy",
    "explain",
    "fail",
    "feel",
    "find",
    "finish",
    "fix",
    "forget",
    "get",
    "give",
    "go",
    "guess",
    "happen",
    "hate",
    "hear",
    "help",
    "hope",
    "invite",
    "join",
    "keep",
    "know",
    "laugh",
    "learn",
    "leave",
    "lend",
    "let",
    "like",
    "listen",
    "live",
    "look",
    "lose",
    "love",
    "make",
    "meet",
    "miss",
    "move",
    "need",
    "offer",
    "open",
    "order",
    "organize",
    "pay",
    "pick",
    "plan",
    "play",
    "prefer",
    "prepare",
    "promise",
    "put",
    "read",
    "receive",
    "recommend",
    "remember",
    "remind",
    "rent",
    "reply",
    "return",
    "run",
    "say",
    "see",
    "sell",
    "send",
    "share",
    "show",
    "sing",
    "sit",
    "sleep",
    "speak",
    "spend",
    "start",
    "stay",
    "stop",
    "study",
    "suggest",
    "take",
    "talk",
    "teach",
    "tell",
    "thank",
    "think",
    "travel",
    "try",
    "turn",
    "understand",
    "use",
    "visit",
    "wait",
    "wake",
    "walk",
    "want",
    "watch",
    "wear",
    "win",
    "wish",
    "work",
    "worry",
    "write",
];

pub const IRREGULAR_VERBS: &[&str] = &[
    "went",
    "gone",
    "came",
    "got",
    "gotten",
    "gave",
    "given",
    "took",
    "taken",
    "made",
    "said",
    "saw",
    "seen",
    "knew",
    "known",
    "thought",
    "told",
    "found",
    "left",
    "felt",
    "brought",
    "bought",
    "sent",
    "spent",
    "met",
    "kept",
    "slept",
    "lost",
    "paid",
    "sold",
    "wrote",
    "written",
    "ate",
    "eaten",
    "drank",
    "drove",
    "driven",
    "broke",
    "broken",
    "forgot",
    "forgotten",
    "understood",
    "chose",
    "chosen",
    "won",
    "wore",
    "ran",
    "sat",
    "spoke",
    "taught",
    "heard",
    "read",
    "put",
    "let",
    "lent",
];

pub fn contains(list: &[&str], word: &str) -> bool {
    list.contains(&word)
}

/// Whether a lowercase form is a known verb or a regular inflection of one.
pub fn is_known_verb(lower: &str) -> bool {
    if contains(VERB_BASES, lower) || contains(IRREGULAR_VERBS, lower) {
        return true;
    }
    let candidates = [
        lower.strip_suffix("ies").map(|s| format!("{s}y")),
        lower.strip_suffix("es").map(str::to_string),
        lower.strip_suffix('s').map(str::to_string),
        lower.strip_suffix("ied").map(|s| format!("{s}y")),
        lower.strip_suffix("ed").map(str::to_string),
        lower.strip_suffix('d').map(str::to_string),
        lower.strip_suffix("ing").map(str::to_string),
        lower.strip_suffix("ing").map(|s| format!("{s}e")),
    ];
    candidates.into_iter().flatten().any(|base| {
        contains(VERB_BASES, &base)
            || (base.len() > 2
                && base.as_bytes()[base.len() - 1] == base.as_bytes()[base.len() - 2]
                && contains(VERB_BASES, &base[..base.len() - 1]))
    })
}
