"""Database package.

- Migration/init logic and campaign queries live in `app.db.db`.
"""

from .db import (  # noqa: F401
    ArgumentItem,
    CampaignItem,
    IssueItem,
    SubmissionItem,
    answered_in_batch,
    connect,
    current_submission,
    get_argument,
    get_campaign,
    get_issue,
    init_db,
    insert_campaign,
    insert_issue,
    latest_issue,
    list_batches,
    list_campaign_annotators,
    list_completions,
    list_current_submissions,
    list_submission_history,
    migrate,
    record_submission,
    submission_by_issue_key,
)
