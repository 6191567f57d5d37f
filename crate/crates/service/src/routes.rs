use axum::body::Bytes;
use axum::extract::{Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use ndarray::Axis;
use serde::Serialize;
use serde_json::{json, Map, Value};

use stackrefine_core::pipeline::{Review, Schedule, SessionState};
use stackrefine_core::scribble::ScribbleSet;
use stackrefine_core::uncertainty::{slice_uncertainty, Next, QueueEntry, Visit};
use stackrefine_core::{ugstack, Error, RefineConfig};

use crate::bundle;
use crate::error::ApiError;
use crate::AppState;

fn ugstack_response(body: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, ugstack::CONTENT_TYPE)], body).into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn state_name(state: &SessionState) -> &'static str {
    if state.is_finished() {
        "finished"
    } else {
        "active"
    }
}

fn spacing(state: &SessionState) -> [f64; 3] {
    let stack = state.stack();
    let (r, c) = stack.pixel_spacing();
    [stack.slice_spacing(), r, c]
}

#[derive(Serialize)]
pub struct Created {
    id: String,
    num_slices: usize,
    cutoff: usize,
    dims: (usize, usize, usize),
    schedule: Schedule,
    queue: Vec<QueueEntry>,
}

/// Multipart upload: `stack` and `probs` as framed UGSTACK, optional
/// `config` (refinement parameters, JSON) and `schedule` (JSON).
pub async fn create_session(State(app): State<AppState>, mut form: Multipart) -> Result<Response, ApiError> {
    let mut stack = None;
    let mut probs = None;
    let mut config = RefineConfig::default();
    let mut schedule = Schedule::default();
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("multipart: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let data = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(format!("multipart field {name}: {e}")))?;
        match name.as_str() {
            "stack" => {
                let (h, payload) = ugstack::decode_frame(&data).map_err(|e| part_error("stack", e))?;
                stack = Some(ugstack::stack_from(&h, payload).map_err(|e| part_error("stack", e))?);
            }
            "probs" => {
                let (h, payload) = ugstack::decode_frame(&data).map_err(|e| part_error("probs", e))?;
                probs = Some(ugstack::probability_group_from(&h, payload).map_err(|e| part_error("probs", e))?);
            }
            "config" => {
                config = serde_json::from_slice(&data).map_err(|e| ApiError::bad_request(format!("config: {e}")))?;
            }
            "schedule" => {
                schedule =
                    serde_json::from_slice(&data).map_err(|e| ApiError::bad_request(format!("schedule: {e}")))?;
            }
            other => return Err(ApiError::bad_request(format!("unexpected part {other:?}"))),
        }
    }
    let stack = stack.ok_or_else(|| ApiError::bad_request("missing part \"stack\""))?;
    let probs = probs.ok_or_else(|| ApiError::bad_request("missing part \"probs\""))?;

    let store = app.store.clone();
    let created = blocking(move || {
        let state = SessionState::new(stack, &probs, config, schedule)?;
        let id = uuid::Uuid::new_v4().to_string();
        let created = Created {
            id: id.clone(),
            num_slices: state.stack().num_slices(),
            cutoff: state.queue().cutoff,
            dims: state.stack().dim(),
            schedule,
            queue: state.queue().entries.clone(),
        };
        store.insert(id, state, &probs)?;
        Ok(created)
    })
    .await?;
    tracing::info!(session = %created.id, slices = created.num_slices, "created session");
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

fn part_error(part: &str, err: Error) -> ApiError {
    let mut e = ApiError::from(err);
    e.message = format!("{part}: {}", e.message);
    e
}

pub async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let session = app.store.get(&id).await?;
    let state = session.lock().await;
    let history: &[Visit] = state.history();
    Ok(Json(json!({
        "id": id,
        "state": state_name(&state),
        "dims": state.stack().dim(),
        "num_slices": state.stack().num_slices(),
        "cutoff": state.queue().cutoff,
        "schedule": state.log().schedule,
        "config": state.config(),
        "current": state.current(),
        "history": history,
        "queue": state.queue().entries,
    })))
}

pub async fn get_slice(State(app): State<AppState>, Path((id, k)): Path<(String, usize)>) -> Result<Response, ApiError> {
    let session = app.store.get(&id).await?;
    let state = session.lock().await;
    if state.is_finished() {
        return Err(Error::SessionFinished.into());
    }
    let m = state.stack().num_slices();
    if k >= m {
        return Err(Error::SliceOutOfRange { slice: k, num_slices: m }.into());
    }
    Ok(ugstack_response(bundle::slice_bundle(&state, k)))
}

/// Body: a scribble set as JSON. Responds with the slice's mask after the
/// submission, as one `[1, H, W]` mask frame whose header also carries the
/// round, the refinement energies and the updated slice score.
pub async fn submit_scribbles(
    State(app): State<AppState>,
    Path((id, k)): Path<(String, usize)>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("scribbles must be UTF-8 JSON"))?;
    let set = ScribbleSet::from_json(text)?;
    if set.slice != k {
        return Err(ApiError::bad_request(format!(
            "scribbles are for slice {} but were posted to slice {k}",
            set.slice
        )));
    }
    let session = app.store.get(&id).await?;
    let mut state = session.lock_owned().await;
    let store = app.store.clone();
    let frame = blocking(move || {
        let before = state.mask().slice(k).to_owned();
        let sub = state.submit(k, &set, |_, _| Review::accept())?;
        store.persist(&id, &state)?;
        let mask = state.mask().slice(k);
        let unc = state.fused().variance.index_axis(Axis(0), k);
        let mut extra = Map::new();
        extra.insert("slice".into(), json!(k));
        extra.insert("round".into(), json!(sub.round));
        extra.insert("accepted".into(), json!(sub.accepted));
        extra.insert("edited".into(), json!(sub.refinement.is_some()));
        extra.insert("changed_pixels".into(), json!(bundle::changed_pixels(mask, &before)));
        extra.insert("score".into(), json!(slice_uncertainty(unc, mask, state.config().zeta)));
        if let Some(r) = &sub.refinement {
            extra.insert("energy_before".into(), json!(r.stats.energy_before));
            extra.insert("energy_after".into(), json!(r.stats.energy_after));
            extra.insert("steps".into(), json!(r.stats.steps));
            extra.insert("foreground_pixels".into(), json!(r.stats.foreground_pixels));
            extra.insert("background_pixels".into(), json!(r.stats.background_pixels));
        }
        tracing::info!(session = %id, slice = k, round = sub.round, "refined slice");
        Ok(bundle::mask_frame(mask, spacing(&state), extra))
    })
    .await?;
    Ok(ugstack_response(frame))
}

pub async fn advance(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let session = app.store.get(&id).await?;
    let mut state = session.lock().await;
    let next = state.advance()?;
    app.store.persist(&id, &state)?;
    let (slice, score) = match next {
        Next::Slice(k) => (Some(k), state.score(k)),
        Next::Done => (None, None),
    };
    Ok(Json(json!({
        "next": slice,
        "score": score,
        "done": next == Next::Done,
        "fetched": state.history().len(),
        "cutoff": state.queue().cutoff,
    })))
}

/// The full current mask as one frame; its header carries the session log
/// under `log` and the session state under `state`.
pub async fn export(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = app.store.get(&id).await?;
    let state = session.lock().await;
    let [s, r, c] = spacing(&state);
    let (mut header, payload) = ugstack::encode_mask(state.mask(), (s, r, c));
    let log = serde_json::to_value(state.log()).map_err(|e| ApiError::internal(e.to_string()))?;
    header.extra.insert("log".into(), log);
    header.extra.insert("state".into(), json!(state_name(&state)));
    header.extra.insert("session".into(), json!(id));
    Ok(ugstack_response(ugstack::encode_frame(&header, &payload)))
}
