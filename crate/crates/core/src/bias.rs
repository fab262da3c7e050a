//! Object/gender co-occurrence counts and the derived bias ratios.
//!
//! Ratios are generic over [`CountRatio`], so the same code yields `f64`
//! values or exact `Ratio<u64>` fractions. Display values are truncated
//! toward zero: two decimals below 1, one decimal from 1 upward.

use num_rational::Ratio;
use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::corpus::{Detection, ImageRecord, Source};
use crate::error::{Error, Result};
use crate::textnorm::{tokenize, Gender, GenderLexicon, TokenSeq};

/// Numeric type a ratio of two counts can be expressed in.
pub trait CountRatio: Num + Clone {
    fn from_count(n: u64) -> Self;
}

impl CountRatio for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }
}

impl CountRatio for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }
}

impl CountRatio for Ratio<u64> {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(n)
    }
}

impl CountRatio for Ratio<i64> {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(i64::try_from(n).expect("count fits in i64"))
    }
}

/// What one co-occurrence is counted over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountUnit {
    #[default]
    Caption,
    Image,
}

impl std::str::FromStr for CountUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "caption" => Ok(CountUnit::Caption),
            "image" => Ok(CountUnit::Image),
            _ => Err(Error::invalid(format!("unknown counting unit {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GenderCounts {
    pub object: String,
    pub with_person: u64,
    pub with_man: u64,
    pub with_woman: u64,
}

impl GenderCounts {
    pub fn count(&self, g: Gender) -> u64 {
        match g {
            Gender::Man => self.with_man,
            Gender::Woman => self.with_woman,
            Gender::Person => self.with_person,
        }
    }
}

/// Which gender columns a tokenized caption hits for `object`.
fn caption_hits(caption: &TokenSeq, object: &[String], lexicon: &GenderLexicon) -> [bool; 3] {
    let mut hits = [false; 3];
    if !caption.contains_run(object) {
        return hits;
    }
    for tok in caption.iter() {
        match lexicon.classify(tok) {
            Some(Gender::Person) => hits[0] = true,
            Some(Gender::Man) => hits[1] = true,
            Some(Gender::Woman) => hits[2] = true,
            None => {}
        }
    }
    hits
}

/// Counts captions (or images) mentioning `object` together with a person,
/// man or woman term. One unit may count toward several columns.
pub fn cooccurrence(
    corpus: &[ImageRecord],
    object_label: &str,
    lexicon: &GenderLexicon,
    unit: CountUnit,
) -> GenderCounts {
    let object = tokenize(object_label);
    let mut counts = GenderCounts {
        object: object_label.to_string(),
        ..Default::default()
    };
    let mut add = |hits: [bool; 3]| {
        counts.with_person += u64::from(hits[0]);
        counts.with_man += u64::from(hits[1]);
        counts.with_woman += u64::from(hits[2]);
    };
    for image in corpus {
        let per_caption = image
            .human_captions
            .iter()
            .map(|c| caption_hits(&tokenize(c), &object, lexicon));
        match unit {
            CountUnit::Caption => per_caption.for_each(&mut add),
            CountUnit::Image => add(per_caption.fold([false; 3], |acc, h| {
                [acc[0] || h[0], acc[1] || h[1], acc[2] || h[2]]
            })),
        }
    }
    counts
}

/// `man / (man + woman)`; `None` when both are zero.
pub fn bias_towards_men<R: CountRatio>(c: &GenderCounts) -> Option<R> {
    let den = c.with_man + c.with_woman;
    (den > 0).then(|| R::from_count(c.with_man) / R::from_count(den))
}

/// `man / person` or `woman / person`; `None` when the person count is zero.
pub fn ratio_to_person<R: CountRatio>(c: &GenderCounts, which: Gender) -> Option<R> {
    if which == Gender::Person {
        return None;
    }
    (c.with_person > 0).then(|| R::from_count(c.count(which)) / R::from_count(c.with_person))
}

/// Decimal places used to display a ratio of this size.
pub fn display_places(num: u64, den: u64) -> u32 {
    if num >= den {
        1
    } else {
        2
    }
}

/// `num / den` truncated toward zero at [`display_places`], computed exactly.
pub fn truncated_ratio(num: u64, den: u64) -> Ratio<u64> {
    let scale = 10u64.pow(display_places(num, den));
    let scaled = (u128::from(num) * u128::from(scale) / u128::from(den)) as u64;
    Ratio::new(scaled, scale)
}

/// Display string of `num / den`, e.g. `0.85`, `0.07`, `4.8`.
pub fn format_ratio(num: u64, den: u64) -> String {
    let places = display_places(num, den);
    let scale = 10u128.pow(places);
    let scaled = u128::from(num) * scale / u128::from(den);
    format!(
        "{}.{:0width$}",
        scaled / scale,
        scaled % scale,
        width = places as usize
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub object: String,
    pub person: u64,
    pub man: u64,
    pub woman: u64,
    /// man / person
    pub m: Option<f64>,
    /// woman / person
    pub w: Option<f64>,
    /// man / (man + woman)
    pub to_m: Option<f64>,
}

impl BiasRow {
    pub fn from_counts(c: &GenderCounts) -> Self {
        BiasRow {
            object: c.object.clone(),
            person: c.with_person,
            man: c.with_man,
            woman: c.with_woman,
            m: ratio_to_person(c, Gender::Man),
            w: ratio_to_person(c, Gender::Woman),
            to_m: bias_towards_men(c),
        }
    }

    /// Truncated display strings for m, w and to-m; `-` when undefined.
    pub fn display(&self) -> [String; 3] {
        let f = |num: u64, den: u64| {
            if den == 0 {
                "-".to_string()
            } else {
                format_ratio(num, den)
            }
        };
        [
            f(self.man, self.person),
            f(self.woman, self.person),
            f(self.man, self.man + self.woman),
        ]
    }
}

pub fn bias_report<S: AsRef<str>>(
    corpus: &[ImageRecord],
    object_labels: &[S],
    lexicon: &GenderLexicon,
    unit: CountUnit,
) -> Vec<BiasRow> {
    object_labels
        .iter()
        .map(|o| BiasRow::from_counts(&cooccurrence(corpus, o.as_ref(), lexicon, unit)))
        .collect()
}

/// A corpus engineered to produce exactly the given `(object, person, man,
/// woman)` caption counts: one image per caption, one gender per caption.
pub fn corpus_from_counts(rows: &[(&str, u64, u64, u64)]) -> Vec<ImageRecord> {
    let mut out = Vec::new();
    for &(object, person, man, woman) in rows {
        for (word, n) in [("person", person), ("man", man), ("woman", woman)] {
            for i in 0..n {
                out.push(ImageRecord {
                    image_id: format!("{object}-{word}-{i}"),
                    human_captions: vec![format!("a {word} next to the {object}")],
                    detections: vec![Detection::new(object, 1.0, Source::Other("synthetic".into()))],
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::default_gender_lexicon;

    fn image(id: &str, caps: &[&str]) -> ImageRecord {
        ImageRecord {
            image_id: id.into(),
            human_captions: caps.iter().map(|c| c.to_string()).collect(),
            detections: vec![],
        }
    }

    #[test]
    fn cooccurrence_rules() {
        let lex = default_gender_lexicon();
        let c = cooccurrence(&[image("a", &["a man wearing clothing"])], "clothing", &lex, CountUnit::Caption);
        assert_eq!((c.with_person, c.with_man, c.with_woman), (0, 1, 0));
        let c = cooccurrence(
            &[image("a", &["a person and a man with a racket"])],
            "racket",
            &lex,
            CountUnit::Caption,
        );
        assert_eq!((c.with_person, c.with_man, c.with_woman), (1, 1, 0));
    }

    #[test]
    fn image_unit_counts_once_per_image() {
        let lex = default_gender_lexicon();
        let corpus = [image("a", &["a man with a dog", "a boy and his dog", "a dog"])];
        assert_eq!(cooccurrence(&corpus, "dog", &lex, CountUnit::Caption).with_man, 2);
        assert_eq!(cooccurrence(&corpus, "dog", &lex, CountUnit::Image).with_man, 1);
    }

    #[test]
    fn ratios_exact_and_float() {
        let c = GenderCounts {
            object: "clothing".into(),
            with_person: 3950,
            with_man: 3360,
            with_woman: 1490,
        };
        let to_m: Ratio<u64> = bias_towards_men(&c).unwrap();
        assert_eq!(to_m, Ratio::new(3360, 4850));
        let f: f64 = bias_towards_men(&c).unwrap();
        assert!((f - 0.692_783_505_154_639).abs() < 1e-12);
        assert_eq!(format_ratio(3360, 4850), "0.69");
        assert_eq!(format_ratio(3360, 3950), "0.85");
        assert_eq!(format_ratio(1490, 3950), "0.37");
        assert_eq!(format_ratio(240, 50), "4.8");
        assert_eq!(format_ratio(200, 140), "1.4");
        assert_eq!(format_ratio(90, 150), "0.60");
        assert_eq!(format_ratio(220, 2810), "0.07");
        assert_eq!(format_ratio(5, 5), "1.0");
    }

    #[test]
    fn undefined_ratios_are_absent() {
        let c = GenderCounts::default();
        assert_eq!(bias_towards_men::<f64>(&c), None);
        assert_eq!(ratio_to_person::<f64>(&c, Gender::Man), None);
        let row = BiasRow::from_counts(&c);
        assert_eq!(row.display(), ["-", "-", "-"].map(String::from));
        let half = GenderCounts {
            with_man: 7,
            with_woman: 7,
            ..Default::default()
        };
        assert_eq!(bias_towards_men::<f64>(&half), Some(0.5));
    }

    #[test]
    fn report_on_engineered_corpus() {
        let corpus = corpus_from_counts(&[("clothing", 3950, 3360, 1490), ("tennis", 140, 200, 60)]);
        let rows = bias_report(&corpus, &["clothing", "tennis", "zebra"], &default_gender_lexicon(), CountUnit::Caption);
        assert_eq!(rows[0].display(), ["0.85", "0.37", "0.69"].map(String::from));
        assert_eq!(rows[1].display()[0], "1.4");
        assert_eq!((rows[2].m, rows[2].to_m), (None, None));
    }
}
