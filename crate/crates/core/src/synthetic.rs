//! Small hand-made corpora for tests, smoke runs and demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dialogue, Sample, Utterance};

/// The flat-rental conversation used throughout the docs and tests.
pub fn worked_example() -> Sample {
    let turns = [
        ("Katarina", "Hello, I got your number from Anna, we work together"),
        (
            "Jill",
            "Hi :) Yes, Anna told me you are looking for a place. The flat is really nice and sunny",
        ),
        (
            "Katarina",
            "Great! I want to rent the flat from Liz, is it still available?",
        ),
        ("Jill", "Yes, Liz is my sister, she is abroad so I'm showing it"),
        ("Jill", "When would you like to see it?"),
        ("Katarina", "I will come to visit it today after 6 pm"),
        ("Jill", "Perfect, see you then"),
        ("Katarina", "Thanks, bye!"),
    ];
    Sample {
        dialogue: Dialogue::new(
            "worked-example",
            turns.iter().map(|(s, t)| Utterance::new(*s, *t)).collect(),
        ),
        references: vec!["Katarina wants to rent a flat from Liz. She will come visit it today after 6 pm.".into()],
    }
}

const NAMES: [&str; 12] = [
    "Anna", "Bob", "Carla", "Dan", "Eve", "Frank", "Greta", "Hugo", "Ivy", "Jack", "Kate", "Leo",
];
const ACTIVITIES: [&str; 8] = [
    "play tennis",
    "watch a movie",
    "have lunch",
    "go shopping",
    "study maths",
    "visit grandma",
    "walk the dog",
    "bake a cake",
];
const PLACES: [&str; 6] = [
    "the park",
    "the mall",
    "the library",
    "the cafe",
    "her place",
    "the station",
];
const TIMES: [&str; 6] = ["tomorrow", "tonight", "on Monday", "at noon", "on Friday", "after work"];
const ITEMS: [&str; 6] = [
    "snacks",
    "the tickets",
    "an umbrella",
    "some money",
    "the keys",
    "a map",
];
const FILLERS: [&str; 5] = ["ok", "haha", "sounds good", "really?", "cool"];

/// `n` templated two-party plans with one-or-two sentence summaries.
pub fn toy_corpus(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut pair = NAMES.choose_multiple(&mut rng, 2);
            let (a, b) = (*pair.next().unwrap(), *pair.next().unwrap());
            let act = *ACTIVITIES.choose(&mut rng).unwrap();
            let place = *PLACES.choose(&mut rng).unwrap();
            let time = *TIMES.choose(&mut rng).unwrap();
            let item = *ITEMS.choose(&mut rng).unwrap();
            let mut turns = vec![
                Utterance::new(a, format!("Hi {b}, do you want to {act} {time}?")),
                Utterance::new(b, "Sure! Where?".to_string()),
                Utterance::new(a, format!("Let's meet at {place}")),
            ];
            for _ in 0..rng.gen_range(0..3) {
                turns.push(Utterance::new(b, *FILLERS.choose(&mut rng).unwrap()));
            }
            let bring = rng.gen_bool(0.5);
            if bring {
                turns.push(Utterance::new(b, format!("I will bring {item}")));
            }
            turns.push(Utterance::new(a, "See you!"));
            let mut summary = format!("{a} and {b} will {act} at {place} {time}.");
            if bring {
                summary.push_str(&format!(" {b} will bring {item}."));
            }
            Sample {
                dialogue: Dialogue::new(format!("toy-{i}"), turns),
                references: vec![summary],
            }
        })
        .collect()
}
