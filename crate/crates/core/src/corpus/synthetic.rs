//! Template-generated samples in the corpus schema.
//!
//! Each sample starts from a context sentence of the form
//! `<title> <name> <adverb> <verb> the <adjective> <noun> <tail>` and
//! derives the claim by changing exactly one triple component. The change
//! determines the inconsistency type and entity types, so the labels are
//! learnable from the text. Used for tests and desk-scale runs.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CharSpan, ClaimComponent, CoarseEntityType, FactTriple, FineEntityType, InconsistencyType, Sample};

use CoarseEntityType as C;
use InconsistencyType as T;

const TITLES: &[&str] = &["Prime Minister", "President", "Senator", "Governor", "Chancellor", "Mayor"];
const NAMES: &[&str] = &[
    "Narendra Modi",
    "Emma Stone",
    "Karl Malone",
    "Lindsay Lohan",
    "Owen Wilson",
    "Gene Hackman",
    "Danny Glover",
    "Bill Murray",
    "Anjelica Huston",
    "Veronica Roth",
    "Ben Stiller",
    "Luke Wilson",
];
const ADVERBS: &[&str] = &["enthusiastically", "proudly", "quietly", "carefully", "quickly", "happily"];
const FREQUENCY: &[(&str, &str)] = &[("often", "rarely"), ("always", "seldom"), ("frequently", "occasionally")];
const VERB_PAIRS: &[(&str, &str)] = &[
    ("hoisted", "lowered"),
    ("won", "lost"),
    ("opened", "closed"),
    ("built", "demolished"),
    ("praised", "criticized"),
    ("bought", "sold"),
];
const NATIONALITIES: &[&str] = &["Indian", "American", "French", "German", "Brazilian", "Japanese"];
const ORDINALS: &[&str] = &["first", "second", "third", "fourth", "fifth"];
const COLORS: &[&str] = &["red", "blue", "green", "golden", "white"];
const NOUNS: &[(&str, CoarseEntityType, &str)] = &[
    ("flag", C::Politics, "symbol"),
    ("trophy", C::Sport, "award"),
    ("stadium", C::Geography, "building"),
    ("album", C::Entertainment, "music"),
    ("film", C::Entertainment, "brand"),
    ("bridge", C::Geography, "building"),
    ("novel", C::Entertainment, "book"),
    ("company", C::Organization, "business"),
];
const SET_ITEMS: &[&str] = &["banner", "pennant", "emblem", "medal", "poster", "plaque", "statue"];
const TAILS: &[&str] = &[
    "in front of a large crowd",
    "during the national ceremony",
    "after a long debate in the assembly",
    "on the first day of the festival",
    "while reporters and officials watched from the stage",
    "",
];
const INTRANSITIVE: &[&str] = &["resigned", "retired", "arrived", "spoke", "campaigned"];
const YEARS: &[&str] = &["in 1998", "in 2004", "in 2015", "last year", "in 2019"];

#[derive(Clone, Copy)]
enum Edit {
    Name,
    Title,
    VerbAntonym,
    Negation,
    Frequency,
    Nationality,
    Ordinal,
    Color,
    Noun,
    SetMembership,
}

// Rough share of each edit, echoing the published type skew.
const EDITS: &[(Edit, u32)] = &[
    (Edit::Name, 3),
    (Edit::Title, 2),
    (Edit::VerbAntonym, 8),
    (Edit::Negation, 20),
    (Edit::Frequency, 6),
    (Edit::Nationality, 22),
    (Edit::Ordinal, 6),
    (Edit::Color, 10),
    (Edit::Noun, 15),
    (Edit::SetMembership, 8),
];

/// Accumulates a sentence from parts while recording char offsets.
#[derive(Default)]
struct Builder {
    text: String,
    chars: usize,
}

impl Builder {
    fn push(&mut self, part: &str) -> CharSpan {
        if !self.text.is_empty() && !part.is_empty() {
            self.text.push(' ');
            self.chars += 1;
        }
        let start = self.chars;
        self.text.push_str(part);
        self.chars += part.chars().count();
        if part.is_empty() {
            CharSpan::empty()
        } else {
            CharSpan {
                start,
                end: self.chars,
                text: part.to_string(),
            }
        }
    }

    fn join(a: &CharSpan, b: &CharSpan, host: &str) -> CharSpan {
        match (a.is_empty(), b.is_empty()) {
            (true, _) => b.clone(),
            (_, true) => a.clone(),
            _ => CharSpan::new(host, a.start, b.end).expect("parts lie in host"),
        }
    }
}

struct Parts<'a> {
    intransitive: bool,
    title: &'a str,
    name: &'a str,
    adverb: String,
    verb: &'a str,
    adjective: &'a str,
    noun: String,
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    xs.choose(rng).expect("non-empty pool")
}

fn pick_other<'a>(rng: &mut ChaCha8Rng, xs: &'a [&'a str], not: &str) -> &'a str {
    loop {
        let x = *pick(rng, xs);
        if x != not {
            return x;
        }
    }
}

fn render(parts: &Parts, tail: &str) -> (String, FactTriple, [CharSpan; 6]) {
    let mut b = Builder::default();
    let title = b.push(parts.title);
    let name = b.push(parts.name);
    let adverb = b.push(&parts.adverb);
    let verb = b.push(parts.verb);
    let (det, adjective, noun) = if parts.intransitive {
        (CharSpan::empty(), CharSpan::empty(), CharSpan::empty())
    } else {
        (b.push("the"), b.push(parts.adjective), b.push(&parts.noun))
    };
    if !tail.is_empty() {
        b.push(tail);
    }
    b.text.push('.');
    let text = b.text;
    let source = Builder::join(&title, &name, &text);
    let relation = Builder::join(&adverb, &verb, &text);
    let target = Builder::join(&det, &noun, &text);
    let mut triple = FactTriple::new(source, relation, target);
    triple.source_head = Some(name.clone());
    triple.source_modifier = Some(title.clone());
    triple.relation_head = Some(verb.clone());
    triple.relation_modifier = Some(adverb.clone());
    if !parts.intransitive {
        triple.target_head = Some(noun.clone());
        triple.target_modifier = Some(adjective.clone());
    }
    (text, triple, [name, title, verb, adverb, noun, adjective])
}

fn component_slot(c: ClaimComponent) -> usize {
    match c {
        ClaimComponent::SubjectHead => 0,
        ClaimComponent::SubjectModifier => 1,
        ClaimComponent::RelationHead => 2,
        ClaimComponent::RelationModifier => 3,
        ClaimComponent::TargetHead => 4,
        ClaimComponent::TargetModifier => 5,
    }
}

fn one(rng: &mut ChaCha8Rng, id: String) -> Sample {
    let total: u32 = EDITS.iter().map(|e| e.1).sum();
    let mut roll = rng.random_range(0..total);
    let edit = EDITS
        .iter()
        .find(|(_, w)| {
            if roll < *w {
                true
            } else {
                roll -= w;
                false
            }
        })
        .map(|e| e.0)
        .expect("weights cover the roll");

    let (verb, antonym) = *pick(rng, VERB_PAIRS);
    // Subject and negation edits sometimes use an intransitive claim.
    let intransitive = matches!(edit, Edit::Name | Edit::Title | Edit::Negation) && rng.random_bool(0.2);
    let verb = if intransitive { *pick(rng, INTRANSITIVE) } else { verb };
    let adjective_pool: &[&str] = match edit {
        Edit::Ordinal => ORDINALS,
        Edit::Color => COLORS,
        _ => NATIONALITIES,
    };
    let (noun, noun_coarse, noun_fine) = *pick(rng, NOUNS);
    let (freq, rare) = *pick(rng, FREQUENCY);
    let ctx = Parts {
        intransitive,
        title: pick(rng, TITLES),
        name: pick(rng, NAMES),
        adverb: if matches!(edit, Edit::Frequency) {
            freq.to_string()
        } else {
            pick(rng, ADVERBS).to_string()
        },
        verb,
        adjective: pick(rng, adjective_pool),
        noun: if matches!(edit, Edit::SetMembership) {
            let mut items: Vec<&str> = SET_ITEMS.to_vec();
            items.retain(|i| *i != noun);
            let a = *pick(rng, &items);
            items.retain(|i| *i != a);
            let b2 = *pick(rng, &items);
            format!("{noun}, {a} and {b2}")
        } else {
            noun.to_string()
        },
    };
    let mut claim = Parts {
        intransitive,
        title: ctx.title,
        name: ctx.name,
        adverb: ctx.adverb.clone(),
        verb: ctx.verb,
        adjective: ctx.adjective,
        noun: ctx.noun.clone(),
    };

    let (component, itype, entity): (ClaimComponent, InconsistencyType, Option<(CoarseEntityType, &str)>) =
        match edit {
            Edit::Name => {
                claim.name = pick_other(rng, NAMES, ctx.name);
                (ClaimComponent::SubjectHead, T::TaxonomicRelations, Some((C::Name, "person")))
            }
            Edit::Title => {
                claim.title = pick_other(rng, TITLES, ctx.title);
                (ClaimComponent::SubjectModifier, T::TaxonomicRelations, Some((C::Profession, "politician")))
            }
            Edit::VerbAntonym => {
                claim.verb = antonym;
                (ClaimComponent::RelationHead, T::Simple, Some((C::Action, "activity")))
            }
            Edit::Negation => {
                claim.adverb = "never".to_string();
                (ClaimComponent::RelationModifier, T::Negation, None)
            }
            Edit::Frequency => {
                claim.adverb = rare.to_string();
                (ClaimComponent::RelationModifier, T::Gradable, Some((C::Quantity, "frequency")))
            }
            Edit::Nationality => {
                claim.adjective = pick_other(rng, NATIONALITIES, ctx.adjective);
                (ClaimComponent::TargetModifier, T::TaxonomicRelations, Some((C::Nationality, "country")))
            }
            Edit::Ordinal => {
                claim.adjective = pick_other(rng, ORDINALS, ctx.adjective);
                (ClaimComponent::TargetModifier, T::Gradable, Some((C::Quantity, "ordinal")))
            }
            Edit::Color => {
                claim.adjective = pick_other(rng, COLORS, ctx.adjective);
                (ClaimComponent::TargetModifier, T::TaxonomicRelations, Some((C::Others, "color")))
            }
            Edit::Noun => {
                let nouns: Vec<&str> = NOUNS.iter().map(|n| n.0).collect();
                claim.noun = pick_other(rng, &nouns, noun).to_string();
                (ClaimComponent::TargetHead, T::TaxonomicRelations, Some((noun_coarse, noun_fine)))
            }
            Edit::SetMembership => {
                let outside: Vec<&str> = SET_ITEMS.iter().copied().filter(|i| !ctx.noun.contains(i)).collect();
                claim.noun = pick(rng, &outside).to_string();
                (ClaimComponent::TargetHead, T::SetBased, Some((C::Material, "object")))
            }
        };

    let tail = format!("{} {}", pick(rng, TAILS), pick(rng, YEARS)).trim().to_string();
    let (context_text, _, context_parts) = render(&ctx, &tail);
    let (claim_text, triple, _) = render(&claim, "");
    let incon_context_span = context_parts[component_slot(component)].clone();
    Sample {
        id,
        claim: claim_text,
        context: context_text,
        triple,
        incon_context_span,
        component,
        itype,
        coarse: entity.map(|e| e.0),
        fine: entity.map(|e| FineEntityType::new(e.1)),
    }
}

/// Generates `n` valid samples deterministically from `seed`.
pub fn generate(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| one(&mut rng, format!("syn-{seed}-{i}"))).collect()
}
