use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{tag_features, Dataset, FeatureOptions, RatingScale};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MovieLensFormat {
    /// `u.data`: `user \t item \t rating \t timestamp`, ratings 1..5.
    Ml100k,
    /// `ratings.dat`: `user::item::rating::timestamp`, ratings 0.5..5 in half steps.
    Ml10m,
}

impl MovieLensFormat {
    pub fn scale(self) -> RatingScale {
        match self {
            MovieLensFormat::Ml100k => RatingScale {
                min: 1.0,
                max: 5.0,
                step: 1.0,
            },
            MovieLensFormat::Ml10m => RatingScale {
                min: 0.5,
                max: 5.0,
                step: 0.5,
            },
        }
    }

    fn separator(self) -> &'static str {
        match self {
            MovieLensFormat::Ml100k => "\t",
            MovieLensFormat::Ml10m => "::",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MovieLensFormat::Ml100k => "ml100k",
            MovieLensFormat::Ml10m => "ml10m",
        }
    }

    pub fn ratings_file(self) -> &'static str {
        match self {
            MovieLensFormat::Ml100k => "u.data",
            MovieLensFormat::Ml10m => "ratings.dat",
        }
    }
}

/// Reads a file whose bytes are Latin-1 (the MovieLens metadata files are).
pub(crate) fn read_latin1(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(bytes.iter().map(|&b| b as char).collect())
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses a MovieLens ratings file. Ids are re-indexed densely in ascending
/// original-id order; the originals are kept in `user_ids` / `item_ids`.
pub fn parse_movielens(path: &Path, format: MovieLensFormat) -> Result<Dataset> {
    let text = read_latin1(path)?;
    let scale = format.scale();
    let sep = format.separator();
    let mut raw = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).collect();
        if fields.len() != 4 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected 4 fields separated by {sep:?}, found {}", fields.len()),
            ));
        }
        let user: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("bad user id {:?}", fields[0])))?;
        let item: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("bad item id {:?}", fields[1])))?;
        let rating: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("bad rating {:?}", fields[2])))?;
        fields[3]
            .trim()
            .parse::<i64>()
            .map_err(|_| parse_error(path, line_no, format!("bad timestamp {:?}", fields[3])))?;
        if !rating.is_finite() || !scale.contains(rating) {
            return Err(parse_error(
                path,
                line_no,
                format!("rating {rating} outside [{}, {}]", scale.min, scale.max),
            ));
        }
        raw.push((user, item, rating));
    }
    if raw.is_empty() {
        return Err(Error::Empty(path.display().to_string()));
    }
    Dataset::from_raw(format.name(), raw, scale)
}

/// Loads a MovieLens directory with side information.
///
/// `ml100k` expects `u.data`, `u.item`, `u.user`. Item tags are the genre
/// flags plus a release-decade token; user tags are gender, occupation and an
/// age bucket. `ml10m` expects `ratings.dat` and optionally `movies.dat`
/// (genres) and `tags.dat` (free-text tags, attached to both the tagging user
/// and the tagged movie).
pub fn load_movielens(dir: &Path, format: MovieLensFormat, opts: FeatureOptions) -> Result<Dataset> {
    let ratings_path = dir.join(format.ratings_file());
    let required: Vec<PathBuf> = match format {
        MovieLensFormat::Ml100k => vec![ratings_path.clone(), dir.join("u.item"), dir.join("u.user")],
        MovieLensFormat::Ml10m => vec![ratings_path.clone()],
    };
    let missing: Vec<String> = required
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(format!(
            "{} (expected layout for {}: {})",
            missing.join(", "),
            format.name(),
            match format {
                MovieLensFormat::Ml100k => "u.data, u.item, u.user",
                MovieLensFormat::Ml10m => "ratings.dat [, movies.dat, tags.dat]",
            }
        )));
    }
    let mut dataset = parse_movielens(&ratings_path, format)?;
    let (user_tags, item_tags) = match format {
        MovieLensFormat::Ml100k => ml100k_tags(dir, &dataset)?,
        MovieLensFormat::Ml10m => ml10m_tags(dir, &dataset)?,
    };
    attach_tag_features(&mut dataset, user_tags, item_tags, opts)?;
    Ok(dataset)
}

type TagCorpus = BTreeMap<usize, Vec<String>>;

pub(crate) fn attach_tag_features(
    dataset: &mut Dataset,
    user_tags: TagCorpus,
    item_tags: TagCorpus,
    opts: FeatureOptions,
) -> Result<()> {
    let (user_ids, user_vocab) = index_tags(user_tags);
    let (item_ids, item_vocab) = index_tags(item_tags);
    let users = tag_features(&user_ids, user_vocab, opts)?;
    let items = tag_features(&item_ids, item_vocab, opts)?;
    let dim = |m: &BTreeMap<usize, Vec<f64>>| m.values().next().map_or(0, |v| v.len());
    // Every class shares one dimension; an empty corpus gives pca_dim zeros.
    let user_dim = if users.is_empty() { opts.pca_dim } else { dim(&users) };
    let item_dim = if items.is_empty() { opts.pca_dim } else { dim(&items) };
    dataset.set_user_features(&users, user_dim);
    dataset.set_item_features(&items, item_dim);
    Ok(())
}

/// Maps string tags to ids in sorted-vocabulary order.
fn index_tags(corpus: TagCorpus) -> (BTreeMap<usize, Vec<usize>>, usize) {
    let vocab: BTreeSet<&String> = corpus.values().flatten().collect();
    let index: BTreeMap<&String, usize> = vocab.into_iter().enumerate().map(|(n, t)| (t, n)).collect();
    let n_vocab = index.len();
    let ids = corpus
        .iter()
        .map(|(&e, tags)| (e, tags.iter().map(|t| index[t]).collect()))
        .collect();
    (ids, n_vocab)
}

fn dense_lookup(ids: &[u64], original: u64) -> Option<usize> {
    ids.binary_search(&original).ok()
}

fn ml100k_tags(dir: &Path, dataset: &Dataset) -> Result<(TagCorpus, TagCorpus)> {
    const GENRES: [&str; 19] = [
        "unknown",
        "Action",
        "Adventure",
        "Animation",
        "Children's",
        "Comedy",
        "Crime",
        "Documentary",
        "Drama",
        "Fantasy",
        "Film-Noir",
        "Horror",
        "Musical",
        "Mystery",
        "Romance",
        "Sci-Fi",
        "Thriller",
        "War",
        "Western",
    ];
    let item_path = dir.join("u.item");
    let mut items = TagCorpus::new();
    for (n, line) in read_latin1(&item_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() < 5 + GENRES.len() {
            return Err(parse_error(&item_path, n + 1, "expected 24 '|'-separated fields"));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| parse_error(&item_path, n + 1, "bad movie id"))?;
        let Some(dense) = dense_lookup(&dataset.item_ids, id) else {
            continue;
        };
        let mut tags = Vec::new();
        for (flag, genre) in fields[5..5 + GENRES.len()].iter().zip(GENRES) {
            if flag.trim() == "1" {
                tags.push(format!("genre:{genre}"));
            }
        }
        if let Some(year) = fields[2].rsplit('-').next().and_then(|y| y.parse::<u32>().ok()) {
            tags.push(format!("decade:{}", year / 10 * 10));
        }
        items.insert(dense, tags);
    }

    let user_path = dir.join("u.user");
    let mut users = TagCorpus::new();
    for (n, line) in read_latin1(&user_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 5 {
            return Err(parse_error(&user_path, n + 1, "expected 5 '|'-separated fields"));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| parse_error(&user_path, n + 1, "bad user id"))?;
        let age: u32 = fields[1]
            .parse()
            .map_err(|_| parse_error(&user_path, n + 1, "bad age"))?;
        let Some(dense) = dense_lookup(&dataset.user_ids, id) else {
            continue;
        };
        users.insert(
            dense,
            vec![
                format!("age:{}", age / 10 * 10),
                format!("gender:{}", fields[2]),
                format!("occupation:{}", fields[3]),
            ],
        );
    }
    Ok((users, items))
}

fn ml10m_tags(dir: &Path, dataset: &Dataset) -> Result<(TagCorpus, TagCorpus)> {
    let mut users = TagCorpus::new();
    let mut items = TagCorpus::new();
    let movies = dir.join("movies.dat");
    if movies.is_file() {
        for (n, line) in read_latin1(&movies)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split("::").collect();
            if fields.len() != 3 {
                return Err(parse_error(&movies, n + 1, "expected MovieID::Title::Genres"));
            }
            let id: u64 = fields[0]
                .parse()
                .map_err(|_| parse_error(&movies, n + 1, "bad movie id"))?;
            if let Some(dense) = dense_lookup(&dataset.item_ids, id) {
                let tags = items.entry(dense).or_default();
                tags.extend(
                    fields[2]
                        .split('|')
                        .filter(|g| !g.is_empty() && *g != "(no genres listed)")
                        .map(|g| format!("genre:{g}")),
                );
            }
        }
    }
    let tags_path = dir.join("tags.dat");
    if tags_path.is_file() {
        for (n, line) in read_latin1(&tags_path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split("::").collect();
            if fields.len() != 4 {
                return Err(parse_error(
                    &tags_path,
                    n + 1,
                    "expected UserID::MovieID::Tag::Timestamp",
                ));
            }
            let user: u64 = fields[0]
                .parse()
                .map_err(|_| parse_error(&tags_path, n + 1, "bad user id"))?;
            let item: u64 = fields[1]
                .parse()
                .map_err(|_| parse_error(&tags_path, n + 1, "bad movie id"))?;
            let tag = format!("tag:{}", fields[2].trim().to_lowercase());
            if let Some(dense) = dense_lookup(&dataset.item_ids, item) {
                items.entry(dense).or_default().push(tag.clone());
            }
            if let Some(dense) = dense_lookup(&dataset.user_ids, user) {
                users.entry(dense).or_default().push(tag);
            }
        }
    }
    Ok((users, items))
}
